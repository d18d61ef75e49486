#include "smcvi/trainer.hpp"

namespace smcvi {

const char* fit_mode_name(FitMode mode) { return mode == FitMode::Vb ? "vb" : "em"; }

FitMode parse_fit_mode(const std::string& name) {
  if (name == "vb") return FitMode::Vb;
  if (name == "em") return FitMode::Em;
  throw std::invalid_argument("unknown fit mode '" + name + "' (expected vb or em)");
}

void TrainConfig::validate() const {
  if (particles == 0) throw std::invalid_argument("particles must be at least 1");
  if (!(adam.step_size > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("Adam moment decay rates must lie in [0, 1)");
  }
}

}  // namespace smcvi
