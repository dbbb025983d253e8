#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <numeric>
#include <type_traits>
#include <vector>

namespace bethe {

using cplx = std::complex<double>;

// Error categories map onto CLI exit codes: validation 2, resource 3, convergence 4.
enum class ErrorKind { validation, resource, convergence, numerical, degenerate };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& s) { return Error(ErrorKind::validation, s); }
inline Error resource_error(const std::string& s) { return Error(ErrorKind::resource, s); }
inline Error convergence_error(const std::string& s) { return Error(ErrorKind::convergence, s); }
inline Error numerical_error(const std::string& s) { return Error(ErrorKind::numerical, s); }
inline Error degenerate_error(const std::string& s) { return Error(ErrorKind::degenerate, s); }

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return 2;
    case ErrorKind::resource: return 3;
    case ErrorKind::convergence: return 4;
    case ErrorKind::numerical: return 4;
    case ErrorKind::degenerate: return 4;
  }
  return 1;
}

template <class T> struct is_complex : std::false_type {};
template <class T> struct is_complex<std::complex<T>> : std::true_type {};
template <class T> inline constexpr bool is_complex_v = is_complex<T>::value;

inline double re(double x) { return x; }
inline double re(cplx x) { return x.real(); }
inline double im(double) { return 0.0; }
inline double im(cplx x) { return x.imag(); }
inline double conj(double x) { return x; }
inline cplx conj(cplx x) { return std::conj(x); }
inline double absval(double x) { return std::fabs(x); }
inline double absval(cplx x) { return std::abs(x); }
inline bool finite(double x) { return std::isfinite(x); }
inline bool finite(cplx x) { return std::isfinite(x.real()) && std::isfinite(x.imag()); }

inline double rel_err(double a, double b) {
  double d = std::fabs(a - b);
  double s = std::max(std::fabs(a), std::fabs(b));
  return s == 0.0 ? d : d / s;
}
inline double rel_err(cplx a, cplx b) {
  double d = std::abs(a - b);
  double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? d : d / s;
}

// x log x with 0 log 0 = 0
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

struct Tolerances {
  double hermitian = 1e-9;
  double psd = 1e-9;
  double z_imag = 1e-10;
};

inline std::uint64_t factorial_u64(int n) {
  std::uint64_t r = 1;
  for (int i = 2; i <= n; ++i) r *= static_cast<std::uint64_t>(i);
  return r;
}

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// Mixed-radix odometer, last digit fastest. Returns false after the final state.
inline bool next_index(std::vector<int>& digits, const std::vector<int>& radix) {
  for (int k = static_cast<int>(digits.size()) - 1; k >= 0; --k) {
    if (++digits[k] < radix[k]) return true;
    digits[k] = 0;
  }
  return false;
}

// All permutations of [0, m) in lexicographic order.
inline std::vector<std::vector<int>> all_permutations(int m) {
  std::vector<std::vector<int>> out;
  std::vector<int> p(m);
  std::iota(p.begin(), p.end(), 0);
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace bethe
