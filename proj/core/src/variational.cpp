#include "smcvi/variational.hpp"

#include <limits>

namespace smcvi {

const char* factor_kind_name(FactorKind kind) {
  switch (kind) {
    case FactorKind::Normal: return "normal";
    case FactorKind::LogNormal: return "log-normal";
    case FactorKind::SigmoidNormal: return "sigmoid-normal";
    case FactorKind::TanhNormal: return "tanh-normal";
  }
  return "?";
}

FactorKind parse_factor_kind(const std::string& name) {
  if (name == "normal") return FactorKind::Normal;
  if (name == "log-normal") return FactorKind::LogNormal;
  if (name == "sigmoid-normal") return FactorKind::SigmoidNormal;
  if (name == "tanh-normal") return FactorKind::TanhNormal;
  throw std::invalid_argument("unknown factor kind '" + name + "'");
}

double factor_inverse(FactorKind kind, double theta) {
  switch (kind) {
    case FactorKind::Normal: return theta;
    case FactorKind::LogNormal: return std::log(theta);
    case FactorKind::SigmoidNormal: return std::log(theta) - std::log1p(-theta);
    case FactorKind::TanhNormal: return std::atanh(theta);
  }
  return theta;
}

std::optional<std::size_t> MeanFieldFamily::find(const std::string& name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<FactorKind> MeanFieldFamily::kinds() const {
  std::vector<FactorKind> out;
  for (const auto& f : factors_) out.push_back(f.kind);
  return out;
}

std::vector<double> MeanFieldFamily::mus() const {
  std::vector<double> out;
  for (const auto& f : factors_) out.push_back(f.mu);
  return out;
}

std::vector<double> MeanFieldFamily::log_sds() const {
  std::vector<double> out;
  for (const auto& f : factors_) out.push_back(f.v);
  return out;
}

ThetaDraw<double> MeanFieldFamily::sample(RngStream& rng) const {
  std::vector<double> eta(size());
  for (auto& e : eta) e = rng.normal();
  const auto k = kinds();
  const auto m = mus();
  const auto s = log_sds();
  return reparam_draw<double>(k, m, s, eta);
}

double MeanFieldFamily::log_density(std::span<const double> theta) const {
  double lq = 0.0;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    const double t = theta[i];
    if (f.kind == FactorKind::LogNormal && !(t > 0.0)) return kNegInf;
    if (f.kind == FactorKind::SigmoidNormal && !(t > 0.0 && t < 1.0)) return kNegInf;
    if (f.kind == FactorKind::TanhNormal && !(t > -1.0 && t < 1.0)) return kNegInf;
    const double x = factor_inverse(f.kind, t);
    lq += normal_logpdf_logsd(x, f.mu, f.v) - factor_log_jacobian(f.kind, x);
  }
  return lq;
}

std::vector<double> MeanFieldFamily::mean() const {
  std::vector<double> out;
  for (const auto& f : factors_) {
    switch (f.kind) {
      case FactorKind::Normal: out.push_back(f.mu); break;
      case FactorKind::LogNormal: out.push_back(std::exp(f.mu + 0.5 * std::exp(2.0 * f.v))); break;
      case FactorKind::SigmoidNormal: out.push_back(sigmoid(f.mu)); break;
      case FactorKind::TanhNormal: out.push_back(std::tanh(f.mu)); break;
    }
  }
  return out;
}

std::vector<double> MeanFieldFamily::location() const {
  std::vector<double> out;
  for (const auto& f : factors_) out.push_back(factor_transform(f.kind, f.mu));
  return out;
}

std::array<double, 4> fisher_block(const Factor& factor) {
  if (factor.kind == FactorKind::SigmoidNormal || factor.kind == FactorKind::TanhNormal) {
    throw UnsupportedFactorError(std::string("no closed-form Fisher block for ") +
                                 factor_kind_name(factor.kind) + " factor '" + factor.name + "'");
  }
  return {std::exp(-2.0 * factor.v), 0.0, 0.0, 2.0};
}

}  // namespace smcvi
