#include "dac/models.hpp"

#include <cmath>

#include "dac/error.hpp"

namespace dac {

std::string_view to_string(ModelTag model) {
  switch (model) {
    case ModelTag::gaussian:
      return "gaussian";
    case ModelTag::brown_resnick:
      return "brown-resnick";
  }
  return "unknown";
}

ModelTag parse_model(std::string_view name) {
  if (name == "gaussian" || name == "gp") return ModelTag::gaussian;
  if (name == "br" || name == "brown-resnick" || name == "brown_resnick")
    return ModelTag::brown_resnick;
  throw InvalidArgument("unknown model \"" + std::string(name) + "\"");
}

GpParams to_gp(const ParamVector& theta) {
  if (theta.model != ModelTag::gaussian) throw InvalidArgument("parameter vector is not Gaussian");
  return GpParams{theta[0], theta[1]};
}

BrParams to_br(const ParamVector& theta) {
  if (theta.model != ModelTag::brown_resnick)
    throw InvalidArgument("parameter vector is not Brown-Resnick");
  return BrParams{theta[0], theta[1]};
}

ParamVector from_gp(const GpParams& p) { return {{p.log_tau2, p.log_phi2}, ModelTag::gaussian}; }

ParamVector from_br(const BrParams& p) { return {{p.theta1, p.theta2}, ModelTag::brown_resnick}; }

InputTransform default_transform(ModelTag model) {
  return model == ModelTag::gaussian ? InputTransform::signed_log : InputTransform::log;
}

double transform_value(InputTransform t, double y) {
  switch (t) {
    case InputTransform::signed_log:
      if (y > 0.0) return std::log(y);
      if (y < 0.0) return -std::log(-y);
      return 0.0;
    case InputTransform::log:
      if (!(y > 0.0)) throw InvalidArgument("log input transform needs positive field values");
      return std::log(y);
  }
  throw InvalidArgument("unknown input transform");
}

namespace {

std::variant<GpSampler, BrownResnickSampler> build(ModelTag model, const GridDomain& domain,
                                                   const ParamVector& theta,
                                                   const std::vector<double>& ladder,
                                                   std::size_t cap) {
  if (theta.model != model) throw InvalidArgument("parameter vector does not match the model");
  if (model == ModelTag::gaussian) return GpSampler(domain, to_gp(theta), ladder);
  return BrownResnickSampler(domain, to_br(theta), cap, ladder);
}

}  // namespace

FieldSampler::FieldSampler(ModelTag model, const GridDomain& domain, const ParamVector& theta,
                           const std::vector<double>& jitter_ladder, std::size_t br_site_cap)
    : model_(model), impl_(build(model, domain, theta, jitter_ladder, br_site_cap)) {}

Field FieldSampler::draw(Stream& stream) const {
  return std::visit([&](const auto& s) { return s.draw(stream); }, impl_);
}

FieldSampler make_sampler_with_retry(ModelTag model, const GridDomain& domain,
                                     const ParamVector& theta) {
  try {
    return FieldSampler(model, domain, theta);
  } catch (const NumericalError&) {
    return FieldSampler(model, domain, theta, kEscalatedJitterLadder);
  }
}

Field simulate_field(ModelTag model, const GridDomain& domain, const ParamVector& theta,
                     Stream& stream) {
  return FieldSampler(model, domain, theta).draw(stream);
}

}  // namespace dac
