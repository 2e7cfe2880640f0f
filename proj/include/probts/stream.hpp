#pragma once

#include <cstddef>
#include <functional>
#include <iterator>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace probts {

/// Single-pass, single-consumer pull stream. The producer returns std::nullopt
/// once exhausted and is not called again afterwards.
template <typename T>
class Stream {
 public:
  using Producer = std::function<std::optional<T>()>;

  Stream() = default;
  explicit Stream(Producer producer) : producer_(std::move(producer)) {}

  std::optional<T> next() {
    if (!producer_) return std::nullopt;
    auto item = producer_();
    if (!item) producer_ = nullptr;
    return item;
  }

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = T;
    using difference_type = std::ptrdiff_t;
    using pointer = T*;
    using reference = T&;

    iterator() = default;
    explicit iterator(Stream* s) : stream_(s) { advance(); }

    reference operator*() { return *current_; }
    pointer operator->() { return &*current_; }
    iterator& operator++() {
      advance();
      return *this;
    }
    void operator++(int) { advance(); }
    bool operator==(const iterator& o) const { return done() == o.done(); }

   private:
    bool done() const { return !current_.has_value(); }
    void advance() {
      current_ = stream_ ? stream_->next() : std::nullopt;
    }
    Stream* stream_ = nullptr;
    std::optional<T> current_;
  };

  iterator begin() { return iterator(this); }
  iterator end() { return iterator(); }

  template <typename F>
  auto map(F f) && -> Stream<std::invoke_result_t<F, T&&>> {
    using U = std::invoke_result_t<F, T&&>;
    auto self = std::make_shared<Stream>(std::move(*this));
    return Stream<U>([self, f = std::move(f)]() mutable -> std::optional<U> {
      auto item = self->next();
      if (!item) return std::nullopt;
      return f(std::move(*item));
    });
  }

  std::vector<T> collect() && {
    std::vector<T> out;
    while (auto item = next()) out.push_back(std::move(*item));
    return out;
  }

 private:
  Producer producer_;
};

template <typename T>
Stream<T> stream_from(std::vector<T> items) {
  auto data = std::make_shared<std::vector<T>>(std::move(items));
  auto pos = std::make_shared<std::size_t>(0);
  return Stream<T>([data, pos]() -> std::optional<T> {
    if (*pos >= data->size()) return std::nullopt;
    return (*data)[(*pos)++];
  });
}

/// A re-openable data source: each call starts a fresh pass.
template <typename T>
using Source = std::function<Stream<T>()>;

}  // namespace probts
