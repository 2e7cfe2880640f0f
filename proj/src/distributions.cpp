#include "probts/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace probts {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_simplex(const std::vector<double>& p, const char* what) {
  double sum = 0;
  for (double x : p) {
    if (!(x >= 0)) throw ConfigError(std::string(what) + " must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(std::string(what) + " must sum to 1");
}

/// Smallest double z with cdf(z) >= q, by bisection down to adjacent doubles.
template <typename Cdf>
double generalized_inverse(const Cdf& cdf, double q, double guess, double scale) {
  if (!std::isfinite(guess)) guess = 0.0;
  if (!(scale > 0) || !std::isfinite(scale)) scale = 1.0;
  double hi = guess;
  double step = scale;
  for (int i = 0; i < 2100 && !(cdf(hi) >= q); ++i) {
    hi = guess + step;
    step *= 2;
    if (!std::isfinite(hi)) return kInf;
  }
  double lo = guess;
  step = scale;
  for (int i = 0; i < 2100 && cdf(lo) >= q; ++i) {
    lo = guess - step;
    step *= 2;
    if (!std::isfinite(lo)) return -kInf;
  }
  while (true) {
    const double mid = lo + (hi - lo) / 2;
    if (mid <= lo || mid >= hi) break;
    if (cdf(mid) >= q) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double q) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2 * q); }

// Bijection -----------------------------------------------------------------

Bijection::Bijection(Kind kind) : kind_(kind) {
  if (const auto* a = std::get_if<AffineMap>(&kind_)) {
    if (!(a->scale > 0) || !std::isfinite(a->scale) || !std::isfinite(a->shift)) {
      throw ConfigError("affine bijection needs a finite positive scale (decreasing maps unsupported)");
    }
  }
  if (const auto* b = std::get_if<BoxCoxMap>(&kind_); b && !std::isfinite(b->lambda)) {
    throw ConfigError("box-cox lambda must be finite");
  }
}

Bijection Bijection::affine(double scale, double shift) { return Bijection(AffineMap{scale, shift}); }

bool Bijection::in_domain(double z) const {
  return std::visit(overloaded{[&](const AffineMap&) { return !std::isnan(z); },
                               [&](const LogMap&) { return z > 0; },
                               [&](const BoxCoxMap& b) { return b.lambda > 0 ? z >= 0 : z > 0; }},
                    kind_);
}

double Bijection::forward(double z) const {
  return std::visit(overloaded{[&](const AffineMap& a) { return a.scale * z + a.shift; },
                               [&](const LogMap&) { return std::log(z); },
                               [&](const BoxCoxMap& b) {
                                 if (b.lambda == 0) return std::log(z);
                                 return std::expm1(b.lambda * std::log(z)) / b.lambda;
                               }},
                    kind_);
}

double Bijection::inverse(double y) const {
  return std::visit(overloaded{[&](const AffineMap& a) { return (y - a.shift) / a.scale; },
                               [&](const LogMap&) { return std::exp(y); },
                               [&](const BoxCoxMap& b) {
                                 if (b.lambda == 0) return std::exp(y);
                                 const double base = b.lambda * y;
                                 if (!(base > -1)) return b.lambda > 0 ? 0.0 : kInf;
                                 return std::exp(std::log1p(base) / b.lambda);
                               }},
                    kind_);
}

double Bijection::log_abs_det_forward(double z) const {
  return std::visit(overloaded{[&](const AffineMap& a) { return std::log(a.scale); },
                               [&](const LogMap&) { return -std::log(z); },
                               [&](const BoxCoxMap& b) { return (b.lambda - 1) * std::log(z); }},
                    kind_);
}

// Construction --------------------------------------------------------------

Distribution::Distribution(Variant v) : v_(std::move(v)) {
  std::visit(
      overloaded{
          [](const Gaussian& d) {
            if (!(d.stddev > 0) || !std::isfinite(d.mean)) throw ConfigError("Gaussian needs stddev > 0");
          },
          [](const StudentT& d) {
            if (!(d.dof > 2) || !(d.scale > 0) || !std::isfinite(d.loc)) {
              throw ConfigError("StudentT needs dof > 2 and scale > 0");
            }
          },
          [](const Gamma& d) {
            if (!(d.shape > 0) || !(d.rate > 0)) throw ConfigError("Gamma needs shape > 0 and rate > 0");
          },
          [](const NegativeBinomial& d) {
            if (!(d.mean > 0) || !(d.dispersion > 0)) {
              throw ConfigError("NegativeBinomial needs mean > 0 and dispersion > 0");
            }
          },
          [](const Binned& d) {
            const auto b = d.values.size();
            if (b == 0 || d.edges.size() != b + 1 || d.probs.size() != b) {
              throw ConfigError("Binned needs B+1 edges, B values and B probs");
            }
            for (std::size_t i = 0; i < b; ++i) {
              if (!(d.edges[i] < d.edges[i + 1])) throw ConfigError("Binned edges must be strictly ascending");
              if (!(d.values[i] >= d.edges[i] && d.values[i] < d.edges[i + 1])) {
                throw ConfigError("Binned values must lie within their bins");
              }
            }
            check_simplex(d.probs, "Binned probs");
          },
          [](const Transformed& d) {
            if (!d.base) throw ConfigError("Transformed needs a base distribution");
          },
          [](const Mixture& d) {
            if (d.components.empty() || d.weights.size() != d.components.size()) {
              throw ConfigError("Mixture needs one weight per component");
            }
            check_simplex(d.weights, "Mixture weights");
          }},
      v_);
}

Distribution Distribution::binned(std::vector<double> edges, std::vector<double> values,
                                  std::vector<double> probs) {
  return Distribution(Binned{std::move(edges), std::move(values), std::move(probs)});
}

Distribution Distribution::transformed(Distribution base, Bijection bijection) {
  return Distribution(Transformed{std::make_shared<const Distribution>(std::move(base)), bijection});
}

Distribution Distribution::mixture(std::vector<double> weights, std::vector<Distribution> components) {
  return Distribution(Mixture{std::move(weights), std::move(components)});
}

bool Distribution::is_discrete() const {
  return std::visit(overloaded{[](const NegativeBinomial&) { return true; },
                               [](const Binned&) { return true; },
                               [](const Transformed& t) { return t.base->is_discrete(); },
                               [](const Mixture& m) {
                                 return std::all_of(m.components.begin(), m.components.end(),
                                                    [](const Distribution& c) { return c.is_discrete(); });
                               },
                               [](const auto&) { return false; }},
                    v_);
}

// Densities -----------------------------------------------------------------

namespace {

double negbin_r(const NegativeBinomial& d) { return 1.0 / d.dispersion; }
double negbin_p(const NegativeBinomial& d) {
  const double r = negbin_r(d);
  return r / (r + d.mean);
}

}  // namespace

double Distribution::log_density(double z) const {
  if (std::isnan(z)) return -kInf;
  return std::visit(
      overloaded{
          [&](const Gaussian& d) {
            if (!std::isfinite(z)) return -kInf;
            const double x = (z - d.mean) / d.stddev;
            return -kHalfLog2Pi - std::log(d.stddev) - 0.5 * x * x;
          },
          [&](const StudentT& d) {
            if (!std::isfinite(z)) return -kInf;
            const double x = (z - d.loc) / d.scale;
            return std::lgamma(0.5 * (d.dof + 1)) - std::lgamma(0.5 * d.dof) -
                   0.5 * std::log(d.dof * std::numbers::pi) - std::log(d.scale) -
                   0.5 * (d.dof + 1) * std::log1p(x * x / d.dof);
          },
          [&](const Gamma& d) {
            if (!(z > 0) || !std::isfinite(z)) return -kInf;
            return d.shape * std::log(d.rate) - std::lgamma(d.shape) + (d.shape - 1) * std::log(z) -
                   d.rate * z;
          },
          [&](const NegativeBinomial& d) {
            if (!(z >= 0) || !std::isfinite(z) || z != std::floor(z)) return -kInf;
            const double r = negbin_r(d);
            const double p = negbin_p(d);
            return std::lgamma(z + r) - std::lgamma(z + 1) - std::lgamma(r) + r * std::log(p) +
                   z * std::log1p(-p);
          },
          [&](const Binned& d) {
            if (z < d.edges.front() || z >= d.edges.back()) return -kInf;
            const auto it = std::upper_bound(d.edges.begin(), d.edges.end(), z);
            const auto bin = static_cast<std::size_t>(it - d.edges.begin()) - 1;
            return std::log(d.probs[bin]);
          },
          [&](const Transformed& d) {
            if (!d.bijection.in_domain(z) || !std::isfinite(z)) return -kInf;
            return d.base->log_density(d.bijection.forward(z)) + d.bijection.log_abs_det_forward(z);
          },
          [&](const Mixture& d) {
            double max_term = -kInf;
            std::vector<double> terms;
            terms.reserve(d.components.size());
            for (std::size_t k = 0; k < d.components.size(); ++k) {
              const double term = std::log(d.weights[k]) + d.components[k].log_density(z);
              terms.push_back(term);
              max_term = std::max(max_term, term);
            }
            if (!std::isfinite(max_term)) return max_term;
            double sum = 0;
            for (double t : terms) sum += std::exp(t - max_term);
            return max_term + std::log(sum);
          }},
      v_);
}

double Distribution::cdf(double z) const {
  if (std::isnan(z)) return kNaN;
  if (z == kInf) return 1.0;
  if (z == -kInf) return 0.0;
  return std::visit(
      overloaded{[&](const Gaussian& d) { return normal_cdf((z - d.mean) / d.stddev); },
                 [&](const StudentT& d) {
                   const double x = (z - d.loc) / d.scale;
                   // P(T <= x) through the regularized incomplete beta function.
                   const double tail = 0.5 * boost::math::ibeta(0.5 * d.dof, 0.5, d.dof / (d.dof + x * x));
                   return x < 0 ? tail : 1.0 - tail;
                 },
                 [&](const Gamma& d) {
                   if (!(z > 0)) return 0.0;
                   return boost::math::gamma_p(d.shape, d.rate * z);
                 },
                 [&](const NegativeBinomial& d) {
                   if (z < 0) return 0.0;
                   const double k = std::floor(z);
                   return boost::math::ibeta(negbin_r(d), k + 1, negbin_p(d));
                 },
                 [&](const Binned& d) {
                   double sum = 0;
                   for (std::size_t i = 0; i < d.values.size(); ++i) {
                     if (d.values[i] <= z) sum += d.probs[i];
                   }
                   return std::min(sum, 1.0);
                 },
                 [&](const Transformed& d) {
                   if (!d.bijection.in_domain(z)) return 0.0;
                   return d.base->cdf(d.bijection.forward(z));
                 },
                 [&](const Mixture& d) {
                   double sum = 0;
                   for (std::size_t k = 0; k < d.components.size(); ++k) {
                     sum += d.weights[k] * d.components[k].cdf(z);
                   }
                   return std::clamp(sum, 0.0, 1.0);
                 }},
      v_);
}

double Distribution::quantile(double q) const {
  if (!(q > 0 && q < 1)) throw DomainError("quantile level must lie in (0, 1)");
  const auto cdf_fn = [this](double z) { return cdf(z); };
  return std::visit(
      overloaded{
          [&](const Gaussian& d) {
            return generalized_inverse(cdf_fn, q, d.mean + d.stddev * normal_quantile(q), d.stddev);
          },
          [&](const StudentT& d) {
            return generalized_inverse(cdf_fn, q, d.loc + d.scale * normal_quantile(q), d.scale);
          },
          [&](const Gamma& d) {
            const double m = d.shape / d.rate;
            return generalized_inverse(cdf_fn, q, m, std::sqrt(d.shape) / d.rate);
          },
          [&](const NegativeBinomial& d) {
            // Integer search: cdf is a step function on the non-negative integers.
            const double sd = std::sqrt(d.mean + d.dispersion * d.mean * d.mean);
            double k = std::max(0.0, std::floor(d.mean + sd * normal_quantile(q)));
            while (k > 0 && cdf(k - 1) >= q) k = std::max(0.0, k - std::max(1.0, std::floor(sd)));
            while (cdf(k) < q) ++k;
            while (k > 0 && cdf(k - 1) >= q) --k;
            return k;
          },
          [&](const Binned& d) {
            double cum = 0;
            for (std::size_t i = 0; i < d.values.size(); ++i) {
              cum += d.probs[i];
              if (cum >= q && d.probs[i] > 0) return d.values[i];
            }
            for (std::size_t i = d.values.size(); i-- > 0;) {
              if (d.probs[i] > 0) return d.values[i];
            }
            return d.values.back();
          },
          [&](const Transformed& d) {
            const double base_q = d.base->quantile(q);
            const double guess = d.bijection.inverse(base_q);
            const double scale = std::max(std::abs(guess) * 1e-3, 1e-12);
            return generalized_inverse(cdf_fn, q, guess, scale);
          },
          [&](const Mixture& d) {
            double lo = kInf, hi = -kInf;
            for (const auto& c : d.components) {
              const double x = c.quantile(q);
              lo = std::min(lo, x);
              hi = std::max(hi, x);
            }
            return generalized_inverse(cdf_fn, q, 0.5 * (lo + hi), std::max(hi - lo, 1e-9));
          }},
      v_);
}

double Distribution::sample(Rng& rng) const {
  return std::visit(
      overloaded{[&](const Gaussian& d) { return std::normal_distribution<double>(d.mean, d.stddev)(rng); },
                 [&](const StudentT& d) {
                   return d.loc + d.scale * std::student_t_distribution<double>(d.dof)(rng);
                 },
                 [&](const Gamma& d) { return std::gamma_distribution<double>(d.shape, 1.0 / d.rate)(rng); },
                 [&](const NegativeBinomial& d) {
                   // Gamma-Poisson mixture.
                   const double r = negbin_r(d);
                   const double rate = std::gamma_distribution<double>(r, d.mean / r)(rng);
                   if (!(rate > 0)) return 0.0;
                   return static_cast<double>(std::poisson_distribution<long long>(rate)(rng));
                 },
                 [&](const Binned& d) {
                   const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                   double cum = 0;
                   for (std::size_t i = 0; i < d.probs.size(); ++i) {
                     cum += d.probs[i];
                     if (u < cum) return d.values[i];
                   }
                   for (std::size_t i = d.probs.size(); i-- > 0;) {
                     if (d.probs[i] > 0) return d.values[i];
                   }
                   return d.values.back();
                 },
                 [&](const Transformed& d) { return d.bijection.inverse(d.base->sample(rng)); },
                 [&](const Mixture& d) {
                   const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                   double cum = 0;
                   std::size_t chosen = d.components.size() - 1;
                   for (std::size_t k = 0; k < d.weights.size(); ++k) {
                     cum += d.weights[k];
                     if (u < cum && d.weights[k] > 0) {
                       chosen = k;
                       break;
                     }
                   }
                   while (d.weights[chosen] == 0 && chosen > 0) --chosen;
                   return d.components[chosen].sample(rng);
                 }},
      v_);
}

std::vector<double> Distribution::sample(Rng& rng, std::size_t n) const {
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
  return out;
}

}  // namespace probts
