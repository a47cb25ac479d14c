#include "phev/rng.hpp"

#include <bit>
#include <sstream>
#include <stdexcept>

namespace phev {

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::bit_cast<std::uint64_t>(spare_);
  return out.str();
}

void Rng::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 engine;
  int spare_flag = 0;
  std::uint64_t spare_bits = 0;
  in >> engine >> spare_flag >> spare_bits;
  if (!in) throw std::invalid_argument("malformed generator state");
  engine_ = engine;
  has_spare_ = spare_flag != 0;
  spare_ = std::bit_cast<double>(spare_bits);
}

}  // namespace phev
