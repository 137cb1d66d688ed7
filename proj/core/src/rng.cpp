#include "saddlekit/rng.hpp"

#include <cmath>
#include <cstring>

namespace saddlekit::rng {

double CounterStream::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * M_PI * u2;
  spare_ = r * std::sin(t);
  have_spare_ = true;
  return r * std::cos(t);
}

Vec CounterStream::normals(int n) {
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = next_normal();
  return out;
}

std::uint64_t digest(const Vec& v) {
  std::uint64_t h = 0x9d2c5680aULL ^ mix64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v[i], sizeof(bits));
    h = mix64(h ^ bits);
  }
  return h;
}

}  // namespace saddlekit::rng
