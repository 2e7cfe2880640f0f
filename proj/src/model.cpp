#include "probts/model.hpp"

namespace probts {

std::uint64_t record_seed(std::uint64_t seed, const TimeSeriesRecord& record) {
  return derive_seed(seed, record.item_id + "@" + std::to_string(record.start.seconds) + "+" +
                               std::to_string(record.length()));
}

}  // namespace probts
