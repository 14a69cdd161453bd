#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace stache {

using Json = nlohmann::json;

/// Integer code of a factor value. Numerical factors store the value itself,
/// categorical factors store the index of the value in their domain.
using Code = std::int32_t;

/// A categorical domain symbol.
using Symbol = std::variant<std::int64_t, std::string>;

inline constexpr std::uint64_t kDefaultSpaceCap = 1'000'000;

class FactorSpec {
 public:
  struct Numerical {
    Code lo;
    Code hi;
  };
  struct Categorical {
    std::vector<Symbol> values;
  };

  static FactorSpec numerical(std::string name, Code lo, Code hi);
  static FactorSpec categorical(std::string name, std::vector<Symbol> values);
  /// Categorical factor whose symbols are the integers 0..count-1.
  static FactorSpec categorical_range(std::string name, int count);

  const std::string& name() const noexcept { return name_; }
  bool is_numerical() const noexcept { return std::holds_alternative<Numerical>(kind_); }
  bool is_categorical() const noexcept { return !is_numerical(); }

  /// Smallest and largest admissible code.
  Code min_code() const noexcept;
  Code max_code() const noexcept;
  std::size_t domain_size() const noexcept {
    return static_cast<std::size_t>(max_code() - min_code()) + 1;
  }
  bool contains(Code code) const noexcept { return code >= min_code() && code <= max_code(); }

  /// Only valid for categorical factors.
  const std::vector<Symbol>& symbols() const;

  std::string format(Code code) const;
  /// Parses a textual value (number or symbol). Returns nullopt when the
  /// token is not a member of the domain.
  std::optional<Code> parse(std::string_view token) const;

  Json value_to_json(Code code) const;
  std::optional<Code> value_from_json(const Json& value) const;

  Json to_json() const;
  static FactorSpec from_json(const Json& doc);

  friend bool operator==(const FactorSpec& a, const FactorSpec& b);

 private:
  FactorSpec(std::string name, std::variant<Numerical, Categorical> kind);

  std::string name_;
  std::variant<Numerical, Categorical> kind_;
};

bool operator==(const FactorSpec::Numerical& a, const FactorSpec::Numerical& b);
bool operator==(const FactorSpec::Categorical& a, const FactorSpec::Categorical& b);

class Factorization;

/// One code per factor. Ordering is lexicographic on codes.
class FactorState {
 public:
  FactorState() = default;
  /// Validates `codes` against `f`; throws InvalidStateError.
  FactorState(const Factorization& f, std::vector<Code> codes);

  /// Skips validation. For code that derives states from states already known valid.
  static FactorState unchecked(std::vector<Code> codes) {
    FactorState s;
    s.codes_ = std::move(codes);
    return s;
  }

  std::size_t size() const noexcept { return codes_.size(); }
  Code operator[](std::size_t j) const { return codes_[j]; }
  const std::vector<Code>& codes() const noexcept { return codes_; }

  /// Copy with factor `j` replaced.
  FactorState with(std::size_t j, Code code) const {
    FactorState s = *this;
    s.codes_[j] = code;
    return s;
  }

  friend auto operator<=>(const FactorState&, const FactorState&) = default;
  friend bool operator==(const FactorState&, const FactorState&) = default;

 private:
  std::vector<Code> codes_;
};

struct FactorStateHash {
  std::size_t operator()(const FactorState& s) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (Code c : s.codes()) {
      h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(c));
      h *= 1099511628211ULL;
    }
    return h;
  }
};

/// Predicate restricting the explanation space. An empty function admits every state.
using ValidityMask = std::function<bool(const FactorState&)>;

class StateSpaceRange;

class Factorization {
 public:
  /// Throws InvalidFactorizationError when empty or when names repeat.
  explicit Factorization(std::vector<FactorSpec> factors);

  std::size_t size() const noexcept { return factors_.size(); }
  const FactorSpec& operator[](std::size_t j) const { return factors_[j]; }
  const std::vector<FactorSpec>& factors() const noexcept { return factors_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Product of domain sizes, saturated at UINT64_MAX.
  std::uint64_t state_count() const noexcept { return state_count_; }

  bool contains(const FactorState& s) const noexcept;
  void validate(const FactorState& s) const;

  FactorState make_state(std::vector<Code> codes) const { return FactorState(*this, std::move(codes)); }

  /// Position of `s` in lexicographic order (last factor varies fastest).
  std::uint64_t rank(const FactorState& s) const;
  FactorState unrank(std::uint64_t index) const;

  /// "(0,0,0,2)"-style rendering using domain symbols.
  std::string format(const FactorState& s) const;
  /// Accepts "0,0,0,2" (positional) or "row=0,col=0,P=0,D=2" (named, every factor once).
  FactorState parse_state(std::string_view literal) const;

  Json state_to_json(const FactorState& s) const;          // [v0, v1, ...]
  FactorState state_from_json(const Json& values) const;  // inverse of state_to_json
  Json state_to_object(const FactorState& s) const;       // {"name": v, ...}
  FactorState state_from_object(const Json& object) const;

  Json to_json() const;
  static Factorization from_json(const Json& doc);

  friend bool operator==(const Factorization& a, const Factorization& b) {
    return a.factors_ == b.factors_;
  }

 private:
  std::vector<FactorSpec> factors_;
  std::uint64_t state_count_ = 0;
};

/// Sum of absolute differences over numerical factors plus the number of
/// differing categorical factors.
int hybrid_distance(const Factorization& f, const FactorState& a, const FactorState& b);

/// Every state at hybrid distance exactly 1, in factor order; numerical -1
/// before +1, categorical alternatives in domain order.
std::vector<FactorState> immediate_neighbors(const Factorization& f, const FactorState& s);
/// As above with masked-out states dropped.
std::vector<FactorState> immediate_neighbors(const Factorization& f, const FactorState& s,
                                             const ValidityMask& mask);

/// Lazily enumerates the full product space in lexicographic order.
class StateSpaceRange {
 public:
  class Iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = FactorState;
    using difference_type = std::ptrdiff_t;
    using pointer = const FactorState*;
    using reference = const FactorState&;

    Iterator() = default;
    Iterator(const Factorization* f, std::uint64_t index);

    reference operator*() const { return current_; }
    pointer operator->() const { return &current_; }
    Iterator& operator++();
    Iterator operator++(int) {
      Iterator copy = *this;
      ++*this;
      return copy;
    }
    friend bool operator==(const Iterator& a, const Iterator& b) { return a.index_ == b.index_; }

   private:
    const Factorization* f_ = nullptr;
    std::uint64_t index_ = 0;
    FactorState current_;
  };

  explicit StateSpaceRange(const Factorization& f) : f_(&f) {}

  Iterator begin() const { return Iterator(f_, 0); }
  Iterator end() const { return Iterator(f_, f_->state_count()); }
  std::uint64_t size() const noexcept { return f_->state_count(); }

 private:
  const Factorization* f_;
};

/// Throws SpaceTooLargeError when the product exceeds `cap`.
StateSpaceRange enumerate_space(const Factorization& f, std::uint64_t cap = kDefaultSpaceCap);

}  // namespace stache
