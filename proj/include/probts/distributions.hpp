#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "probts/common.hpp"

namespace probts {

struct Gaussian {
  double mean = 0.0;
  double stddev = 1.0;
};

struct StudentT {
  double dof = 3.0;
  double loc = 0.0;
  double scale = 1.0;
};

struct Gamma {
  double shape = 1.0;
  double rate = 1.0;
};

/// Variance = mean + dispersion * mean^2.
struct NegativeBinomial {
  double mean = 1.0;
  double dispersion = 1.0;
};

/// Bins are [edges[i], edges[i+1]); values[i] represents bin i.
struct Binned {
  std::vector<double> edges;
  std::vector<double> values;
  std::vector<double> probs;
};

struct AffineMap {
  double scale = 1.0;  // must be > 0
  double shift = 0.0;
};
struct LogMap {};
struct BoxCoxMap {
  double lambda = 0.0;
};

/// Monotonically increasing map from data space to latent space.
/// forward: data -> latent, inverse: latent -> data.
class Bijection {
 public:
  using Kind = std::variant<AffineMap, LogMap, BoxCoxMap>;

  Bijection(Kind kind);
  static Bijection affine(double scale, double shift);
  static Bijection log() { return Bijection(LogMap{}); }
  static Bijection boxcox(double lambda) { return Bijection(BoxCoxMap{lambda}); }

  double forward(double z) const;
  /// Latent values with no preimage are clamped to the domain boundary.
  double inverse(double y) const;
  double log_abs_det_forward(double z) const;
  bool in_domain(double z) const;

  const Kind& kind() const { return kind_; }

 private:
  Kind kind_;
};

class Distribution;

struct Transformed {
  std::shared_ptr<const Distribution> base;
  Bijection bijection;
};

struct Mixture {
  std::vector<double> weights;
  std::vector<Distribution> components;
};

class Distribution {
 public:
  using Variant = std::variant<Gaussian, StudentT, Gamma, NegativeBinomial, Binned, Transformed, Mixture>;

  /// Validates parameters; throws ConfigError when invalid.
  Distribution(Variant v);

  static Distribution gaussian(double mean, double stddev) { return Distribution(Gaussian{mean, stddev}); }
  static Distribution student_t(double dof, double loc, double scale) { return Distribution(StudentT{dof, loc, scale}); }
  static Distribution gamma(double shape, double rate) { return Distribution(Gamma{shape, rate}); }
  static Distribution negative_binomial(double mean, double dispersion) {
    return Distribution(NegativeBinomial{mean, dispersion});
  }
  static Distribution binned(std::vector<double> edges, std::vector<double> values, std::vector<double> probs);
  static Distribution transformed(Distribution base, Bijection bijection);
  static Distribution mixture(std::vector<double> weights, std::vector<Distribution> components);

  /// -infinity outside the support, never throws.
  double log_density(double z) const;
  double cdf(double z) const;
  /// Smallest z with cdf(z) >= q. Requires 0 < q < 1.
  double quantile(double q) const;
  double sample(Rng& rng) const;
  std::vector<double> sample(Rng& rng, std::size_t n) const;

  bool is_discrete() const;
  const Variant& variant() const { return v_; }

 private:
  Variant v_;
};

double normal_cdf(double x);
/// Standard-normal quantile; used for seeding searches and by tests.
double normal_quantile(double q);

}  // namespace probts
