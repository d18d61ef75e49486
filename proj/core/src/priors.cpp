#include <sstream>

#include "smcvi/variational.hpp"

namespace smcvi {

std::string prior_to_string(const Prior& p) {
  std::ostringstream os;
  switch (p.kind) {
    case Prior::Kind::Flat: os << "flat"; break;
    case Prior::Kind::Normal: os << "N(" << p.a << ", " << p.b << ")"; break;
    case Prior::Kind::Gamma: os << "Ga(" << p.a << ", " << p.b << ")"; break;
    case Prior::Kind::Uniform: os << "U(" << p.a << ", " << p.b << ")"; break;
    case Prior::Kind::LogNormal: os << "LN(" << p.a << ", " << p.b << ")"; break;
    case Prior::Kind::InverseGamma: os << "IG(" << p.a << ", " << p.b << ")"; break;
  }
  return os.str();
}

}  // namespace smcvi
