#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace bodybench {

template <typename T>
using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Points3 = Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename T>
using Points2 = Eigen::Matrix<T, Eigen::Dynamic, 2, Eigen::RowMajor>;

using Points3d = Points3<double>;
using Points2d = Points2<double>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Violated precondition or inconsistent dimensions supplied by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or unreadable input file. Carries the offending path and,
// when known, the 1-based line number.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        path_(path),
        line_(line) {}

  const std::string& path() const { return path_; }
  int line() const { return line_; }

 private:
  std::string path_;
  int line_;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

}  // namespace bodybench
