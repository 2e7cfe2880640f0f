#pragma once

#include <memory>

#include "probts/config.hpp"
#include "probts/dataset.hpp"
#include "probts/forecast.hpp"
#include "probts/stream.hpp"

namespace probts {

/// A trained model; stateless with respect to the records it forecasts.
class Predictor {
 public:
  virtual ~Predictor() = default;
  /// Forecasts `horizon` steps past the end of record.target.
  virtual Forecast predict(const TimeSeriesRecord& record, int horizon) const = 0;
  virtual ConfigNode config() const = 0;
};

/// Holds hyper-parameters only; train() returns a new Predictor.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::unique_ptr<Predictor> train(const Source<TimeSeriesRecord>& data) const = 0;
  virtual ConfigNode config() const = 0;
};

/// Seed for forecasting one record: stable in the record's identity, not its position.
std::uint64_t record_seed(std::uint64_t seed, const TimeSeriesRecord& record);

}  // namespace probts
