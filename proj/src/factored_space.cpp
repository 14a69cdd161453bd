#include "stache/factored_space.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "stache/error.hpp"

namespace stache {

namespace {

constexpr const char* kFactorizationSchema = "stache-factorization/1";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> parse_int(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    return std::nullopt;
  }
  return value;
}

std::string symbol_text(const Symbol& symbol) {
  if (const auto* i = std::get_if<std::int64_t>(&symbol)) return std::to_string(*i);
  return std::get<std::string>(symbol);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FactorSpec

FactorSpec::FactorSpec(std::string name, std::variant<Numerical, Categorical> kind)
    : name_(std::move(name)), kind_(std::move(kind)) {}

FactorSpec FactorSpec::numerical(std::string name, Code lo, Code hi) {
  if (lo > hi) {
    throw InvalidFactorizationError(fmt::format("factor '{}': lo {} > hi {}", name, lo, hi));
  }
  return FactorSpec(std::move(name), Numerical{lo, hi});
}

FactorSpec FactorSpec::categorical(std::string name, std::vector<Symbol> values) {
  if (values.empty()) {
    throw InvalidFactorizationError(fmt::format("factor '{}': empty categorical domain", name));
  }
  std::set<Symbol> seen;
  for (const auto& v : values) {
    if (!seen.insert(v).second) {
      throw InvalidFactorizationError(
          fmt::format("factor '{}': duplicate categorical value '{}'", name, symbol_text(v)));
    }
  }
  return FactorSpec(std::move(name), Categorical{std::move(values)});
}

FactorSpec FactorSpec::categorical_range(std::string name, int count) {
  std::vector<Symbol> values;
  for (int i = 0; i < count; ++i) values.emplace_back(std::int64_t{i});
  return categorical(std::move(name), std::move(values));
}

Code FactorSpec::min_code() const noexcept {
  if (const auto* n = std::get_if<Numerical>(&kind_)) return n->lo;
  return 0;
}

Code FactorSpec::max_code() const noexcept {
  if (const auto* n = std::get_if<Numerical>(&kind_)) return n->hi;
  return static_cast<Code>(std::get<Categorical>(kind_).values.size()) - 1;
}

const std::vector<Symbol>& FactorSpec::symbols() const {
  if (const auto* c = std::get_if<Categorical>(&kind_)) return c->values;
  throw InvalidFactorizationError(fmt::format("factor '{}' is numerical", name_));
}

std::string FactorSpec::format(Code code) const {
  if (is_numerical()) return std::to_string(code);
  const auto& values = std::get<Categorical>(kind_).values;
  if (code < 0 || static_cast<std::size_t>(code) >= values.size()) return "?" + std::to_string(code);
  return symbol_text(values[static_cast<std::size_t>(code)]);
}

std::optional<Code> FactorSpec::parse(std::string_view token) const {
  token = trim(token);
  if (is_numerical()) {
    auto v = parse_int(token);
    if (!v || *v < min_code() || *v > max_code()) return std::nullopt;
    return static_cast<Code>(*v);
  }
  const auto& values = std::get<Categorical>(kind_).values;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (symbol_text(values[i]) == token) return static_cast<Code>(i);
  }
  return std::nullopt;
}

Json FactorSpec::value_to_json(Code code) const {
  if (is_numerical()) return code;
  const auto& symbol = std::get<Categorical>(kind_).values.at(static_cast<std::size_t>(code));
  if (const auto* i = std::get_if<std::int64_t>(&symbol)) return *i;
  return std::get<std::string>(symbol);
}

std::optional<Code> FactorSpec::value_from_json(const Json& value) const {
  if (is_numerical()) {
    if (!value.is_number_integer()) return std::nullopt;
    auto v = value.get<std::int64_t>();
    if (v < min_code() || v > max_code()) return std::nullopt;
    return static_cast<Code>(v);
  }
  const auto& values = std::get<Categorical>(kind_).values;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& symbol = values[i];
    if (const auto* n = std::get_if<std::int64_t>(&symbol)) {
      if (value.is_number_integer() && value.get<std::int64_t>() == *n) return static_cast<Code>(i);
    } else if (value.is_string() && value.get<std::string>() == std::get<std::string>(symbol)) {
      return static_cast<Code>(i);
    }
  }
  return std::nullopt;
}

Json FactorSpec::to_json() const {
  if (const auto* n = std::get_if<Numerical>(&kind_)) {
    return Json{{"name", name_}, {"kind", "numerical"}, {"lo", n->lo}, {"hi", n->hi}};
  }
  Json values = Json::array();
  for (const auto& symbol : std::get<Categorical>(kind_).values) {
    if (const auto* i = std::get_if<std::int64_t>(&symbol)) {
      values.push_back(*i);
    } else {
      values.push_back(std::get<std::string>(symbol));
    }
  }
  return Json{{"name", name_}, {"kind", "categorical"}, {"values", std::move(values)}};
}

FactorSpec FactorSpec::from_json(const Json& doc) {
  try {
    const auto name = doc.at("name").get<std::string>();
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "numerical") {
      if (!doc.at("lo").is_number_integer() || !doc.at("hi").is_number_integer()) {
        throw InvalidFactorizationError(fmt::format("factor '{}': bounds must be integers", name));
      }
      const auto lo = doc.at("lo").get<std::int64_t>();
      const auto hi = doc.at("hi").get<std::int64_t>();
      if (lo < std::numeric_limits<Code>::min() || hi > std::numeric_limits<Code>::max()) {
        throw InvalidFactorizationError(fmt::format("factor '{}': bounds out of range", name));
      }
      return numerical(name, static_cast<Code>(lo), static_cast<Code>(hi));
    }
    if (kind == "categorical") {
      std::vector<Symbol> values;
      for (const auto& v : doc.at("values")) {
        if (v.is_number_integer()) {
          values.emplace_back(v.get<std::int64_t>());
        } else if (v.is_string()) {
          values.emplace_back(v.get<std::string>());
        } else {
          throw InvalidFactorizationError(
              fmt::format("factor '{}': categorical values must be integers or strings", name));
        }
      }
      return categorical(name, std::move(values));
    }
    throw InvalidFactorizationError(fmt::format("factor '{}': unknown kind '{}'", name, kind));
  } catch (const Json::exception& e) {
    throw SchemaError(fmt::format("malformed factor specification: {}", e.what()));
  }
}

bool operator==(const FactorSpec::Numerical& a, const FactorSpec::Numerical& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

bool operator==(const FactorSpec::Categorical& a, const FactorSpec::Categorical& b) {
  return a.values == b.values;
}

bool operator==(const FactorSpec& a, const FactorSpec& b) {
  return a.name_ == b.name_ && a.kind_ == b.kind_;
}

// ---------------------------------------------------------------------------
// FactorState / Factorization

FactorState::FactorState(const Factorization& f, std::vector<Code> codes) : codes_(std::move(codes)) {
  f.validate(*this);
}

Factorization::Factorization(std::vector<FactorSpec> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw InvalidFactorizationError("factorization needs at least one factor");
  std::set<std::string> names;
  for (const auto& spec : factors_) {
    if (!names.insert(spec.name()).second) {
      throw InvalidFactorizationError(fmt::format("duplicate factor name '{}'", spec.name()));
    }
  }
  std::uint64_t count = 1;
  for (const auto& spec : factors_) {
    const auto n = static_cast<std::uint64_t>(spec.domain_size());
    if (count > std::numeric_limits<std::uint64_t>::max() / n) {
      count = std::numeric_limits<std::uint64_t>::max();
      break;
    }
    count *= n;
  }
  state_count_ = count;
}

std::optional<std::size_t> Factorization::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    if (factors_[j].name() == name) return j;
  }
  return std::nullopt;
}

bool Factorization::contains(const FactorState& s) const noexcept {
  if (s.size() != factors_.size()) return false;
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    if (!factors_[j].contains(s[j])) return false;
  }
  return true;
}

void Factorization::validate(const FactorState& s) const {
  if (s.size() != factors_.size()) {
    throw InvalidStateError(
        fmt::format("state has {} values, factorization has {} factors", s.size(), factors_.size()));
  }
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    if (!factors_[j].contains(s[j])) {
      throw InvalidStateError(fmt::format("value {} out of domain for factor '{}'", s[j],
                                          factors_[j].name()));
    }
  }
}

std::uint64_t Factorization::rank(const FactorState& s) const {
  validate(s);
  std::uint64_t index = 0;
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    index = index * factors_[j].domain_size() +
            static_cast<std::uint64_t>(s[j] - factors_[j].min_code());
  }
  return index;
}

FactorState Factorization::unrank(std::uint64_t index) const {
  if (index >= state_count_) {
    throw InvalidStateError(fmt::format("state index {} out of range [0, {})", index, state_count_));
  }
  std::vector<Code> codes(factors_.size());
  for (std::size_t j = factors_.size(); j-- > 0;) {
    const auto n = factors_[j].domain_size();
    codes[j] = factors_[j].min_code() + static_cast<Code>(index % n);
    index /= n;
  }
  return FactorState::unchecked(std::move(codes));
}

std::string Factorization::format(const FactorState& s) const {
  std::string out = "(";
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j) out += ',';
    out += j < factors_.size() ? factors_[j].format(s[j]) : std::to_string(s[j]);
  }
  out += ')';
  return out;
}

FactorState Factorization::parse_state(std::string_view literal) const {
  literal = trim(literal);
  if (!literal.empty() && literal.front() == '(' && literal.back() == ')') {
    literal = literal.substr(1, literal.size() - 2);
  }
  const auto tokens = split(literal, ',');
  if (tokens.size() != factors_.size()) {
    throw InvalidStateError(fmt::format("state literal '{}' has {} values, expected {}", literal,
                                        tokens.size(), factors_.size()));
  }
  const bool named = tokens.front().find('=') != std::string_view::npos;
  std::vector<std::optional<Code>> codes(factors_.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::size_t j = i;
    std::string_view value = tokens[i];
    if (named) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string_view::npos) {
        throw InvalidStateError(fmt::format("mixed positional and named values in '{}'", literal));
      }
      const auto name = trim(tokens[i].substr(0, eq));
      const auto found = index_of(name);
      if (!found) throw InvalidStateError(fmt::format("unknown factor '{}'", name));
      j = *found;
      if (codes[j]) throw InvalidStateError(fmt::format("factor '{}' given twice", name));
      value = tokens[i].substr(eq + 1);
    }
    codes[j] = factors_[j].parse(value);
    if (!codes[j]) {
      throw InvalidStateError(fmt::format("value '{}' out of domain for factor '{}'", trim(value),
                                          factors_[j].name()));
    }
  }
  std::vector<Code> out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(*c);
  return FactorState(*this, std::move(out));
}

Json Factorization::state_to_json(const FactorState& s) const {
  Json values = Json::array();
  for (std::size_t j = 0; j < factors_.size(); ++j) values.push_back(factors_[j].value_to_json(s[j]));
  return values;
}

FactorState Factorization::state_from_json(const Json& values) const {
  if (!values.is_array() || values.size() != factors_.size()) {
    throw InvalidStateError(fmt::format("expected an array of {} factor values, got {}",
                                        factors_.size(), values.dump()));
  }
  std::vector<Code> codes;
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    auto code = factors_[j].value_from_json(values[j]);
    if (!code) {
      throw InvalidStateError(fmt::format("value {} out of domain for factor '{}'", values[j].dump(),
                                          factors_[j].name()));
    }
    codes.push_back(*code);
  }
  return FactorState::unchecked(std::move(codes));
}

Json Factorization::state_to_object(const FactorState& s) const {
  Json object = Json::object();
  for (std::size_t j = 0; j < factors_.size(); ++j) object[factors_[j].name()] = factors_[j].value_to_json(s[j]);
  return object;
}

FactorState Factorization::state_from_object(const Json& object) const {
  if (!object.is_object() || object.size() != factors_.size()) {
    throw InvalidStateError(fmt::format("expected an object with {} factors, got {}", factors_.size(),
                                        object.dump()));
  }
  std::vector<Code> codes;
  for (const auto& spec : factors_) {
    auto it = object.find(spec.name());
    if (it == object.end()) throw InvalidStateError(fmt::format("missing factor '{}'", spec.name()));
    auto code = spec.value_from_json(*it);
    if (!code) {
      throw InvalidStateError(
          fmt::format("value {} out of domain for factor '{}'", it->dump(), spec.name()));
    }
    codes.push_back(*code);
  }
  return FactorState::unchecked(std::move(codes));
}

Json Factorization::to_json() const {
  Json factors = Json::array();
  for (const auto& spec : factors_) factors.push_back(spec.to_json());
  return Json{{"schema", kFactorizationSchema}, {"factors", std::move(factors)}};
}

Factorization Factorization::from_json(const Json& doc) {
  if (!doc.is_object()) throw SchemaError("factorization must be a JSON object");
  if (auto it = doc.find("schema"); it != doc.end() && *it != kFactorizationSchema) {
    throw SchemaError(fmt::format("unsupported factorization schema {}", it->dump()));
  }
  auto it = doc.find("factors");
  if (it == doc.end() || !it->is_array()) throw SchemaError("factorization lacks a 'factors' array");
  std::vector<FactorSpec> specs;
  for (const auto& entry : *it) specs.push_back(FactorSpec::from_json(entry));
  return Factorization(std::move(specs));
}

// ---------------------------------------------------------------------------
// Metric and induced graph

int hybrid_distance(const Factorization& f, const FactorState& a, const FactorState& b) {
  f.validate(a);
  f.validate(b);
  int d = 0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (f[j].is_numerical()) {
      d += std::abs(a[j] - b[j]);
    } else {
      d += a[j] != b[j] ? 1 : 0;
    }
  }
  return d;
}

std::vector<FactorState> immediate_neighbors(const Factorization& f, const FactorState& s) {
  f.validate(s);
  std::vector<FactorState> out;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto& spec = f[j];
    if (spec.is_numerical()) {
      if (s[j] > spec.min_code()) out.push_back(s.with(j, s[j] - 1));
      if (s[j] < spec.max_code()) out.push_back(s.with(j, s[j] + 1));
    } else {
      for (Code c = spec.min_code(); c <= spec.max_code(); ++c) {
        if (c != s[j]) out.push_back(s.with(j, c));
      }
    }
  }
  return out;
}

std::vector<FactorState> immediate_neighbors(const Factorization& f, const FactorState& s,
                                             const ValidityMask& mask) {
  auto out = immediate_neighbors(f, s);
  if (mask) std::erase_if(out, [&](const FactorState& n) { return !mask(n); });
  return out;
}

StateSpaceRange::Iterator::Iterator(const Factorization* f, std::uint64_t index) : f_(f), index_(index) {
  if (index_ < f_->state_count()) current_ = f_->unrank(index_);
}

StateSpaceRange::Iterator& StateSpaceRange::Iterator::operator++() {
  ++index_;
  if (index_ >= f_->state_count()) return *this;
  // Odometer increment, last factor fastest.
  std::vector<Code> codes = current_.codes();
  for (std::size_t j = codes.size(); j-- > 0;) {
    if (codes[j] < (*f_)[j].max_code()) {
      ++codes[j];
      break;
    }
    codes[j] = (*f_)[j].min_code();
  }
  current_ = FactorState::unchecked(std::move(codes));
  return *this;
}

StateSpaceRange enumerate_space(const Factorization& f, std::uint64_t cap) {
  if (f.state_count() > cap) {
    throw SpaceTooLargeError(
        fmt::format("state space has {} states, cap is {}", f.state_count(), cap));
  }
  return StateSpaceRange(f);
}

}  // namespace stache
