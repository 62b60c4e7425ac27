#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dac/gp.hpp"
#include "dac/maxstable.hpp"
#include "dac/rng.hpp"
#include "dac/spatial.hpp"

namespace dac {

/// Number of model parameters estimated by every supported model.
inline constexpr std::size_t kParamDim = 2;

enum class ModelTag : std::uint8_t { gaussian = 0, brown_resnick = 1 };

[[nodiscard]] std::string_view to_string(ModelTag model);
/// Accepts "gaussian" / "gp" and "br" / "brown-resnick".
[[nodiscard]] ModelTag parse_model(std::string_view name);

/*!
 * Parameter vector on the estimation scale.
 *   gaussian:      (log tau2, log phi2)
 *   brown_resnick: (log lambda, log(nu / (2 - nu)))
 */
struct ParamVector {
  std::array<double, kParamDim> values{};
  ModelTag model = ModelTag::gaussian;

  [[nodiscard]] double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

[[nodiscard]] GpParams to_gp(const ParamVector& theta);
[[nodiscard]] BrParams to_br(const ParamVector& theta);
[[nodiscard]] ParamVector from_gp(const GpParams& p);
[[nodiscard]] ParamVector from_br(const BrParams& p);

enum class InputTransform : std::uint8_t { signed_log = 0, log = 1 };

[[nodiscard]] InputTransform default_transform(ModelTag model);

/// signed_log: 1(y>0) log y - 1(y<=0) log(-y), with 0 -> 0. log: log y.
[[nodiscard]] double transform_value(InputTransform t, double y);

/// Dispatching sampler for one (model, domain, theta); caches the factorization.
class FieldSampler {
 public:
  FieldSampler(ModelTag model, const GridDomain& domain, const ParamVector& theta,
               const std::vector<double>& jitter_ladder = kDefaultJitterLadder,
               std::size_t br_site_cap = kBrownResnickSiteCap);

  [[nodiscard]] Field draw(Stream& stream) const;
  [[nodiscard]] ModelTag model() const noexcept { return model_; }

 private:
  ModelTag model_;
  std::variant<GpSampler, BrownResnickSampler> impl_;
};

/// Builds a sampler, retrying once with the escalated jitter ladder if the
/// default factorization fails.
[[nodiscard]] FieldSampler make_sampler_with_retry(ModelTag model, const GridDomain& domain,
                                                   const ParamVector& theta);

[[nodiscard]] Field simulate_field(ModelTag model, const GridDomain& domain,
                                   const ParamVector& theta, Stream& stream);

}  // namespace dac
