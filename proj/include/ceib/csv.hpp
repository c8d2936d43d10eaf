#ifndef CEIB_CSV_HPP_
#define CEIB_CSV_HPP_

#include <fstream>
#include <string>
#include <vector>

namespace ceib {

// Shortest representation that round-trips through a double.
std::string format_double(double v);

double parse_double(const std::string& s);

// Minimal CSV: comma separated, no quoting. Field values must not contain
// commas or newlines; writers enforce this.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void row(const std::vector<std::string>& fields);
  bool good() const { return out_.good(); }

 private:
  std::ofstream out_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace ceib

#endif  // CEIB_CSV_HPP_
