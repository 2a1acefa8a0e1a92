#include "exprate/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "exprate/errors.hpp"
#include "exprate/util.hpp"

namespace exprate {

namespace {

constexpr const char* kContractColumns[] = {"policy_id",      "vehicle_id", "contract_index",
                                            "effective_date", "exposure",   "claim_count",
                                            "calendar_year"};
constexpr std::size_t kFixedContractColumns = std::size(kContractColumns);
constexpr const char* kClaimsHeader = "policy_id,vehicle_id,contract_index,claim_ordinal,cost";

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string format_date(const std::chrono::year_month_day& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::optional<std::chrono::year_month_day> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  long y = 0, m = 0, d = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
      !parse_int(text.substr(8, 2), d))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(y)},
                                  std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return ymd;
}

ContractKey key_of_claim(const ClaimRecord& c) {
  return {c.policy_id, c.vehicle_id, c.contract_index};
}

ContractKey key_of_contract(const ContractRecord& c) {
  return {c.policy_id, c.vehicle_id, c.contract_index};
}

bool same_key(const ContractKey& a, const ContractKey& b) {
  return a.contract_index == b.contract_index && a.policy_id == b.policy_id &&
         a.vehicle_id == b.vehicle_id;
}

}  // namespace

std::string ContractKey::to_string() const {
  return "(" + policy_id + "," + vehicle_id + "," + std::to_string(contract_index) + ")";
}

bool id_less(const std::string& a, const std::string& b) {
  if (all_digits(a) && all_digits(b)) {
    auto strip = [](const std::string& s) {
      auto pos = s.find_first_not_of('0');
      return pos == std::string::npos ? std::string_view{} : std::string_view{s}.substr(pos);
    };
    auto sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
    return a < b;
  }
  return a < b;
}

bool key_less(const ContractKey& a, const ContractKey& b) {
  if (a.policy_id != b.policy_id) return id_less(a.policy_id, b.policy_id);
  if (a.vehicle_id != b.vehicle_id) return id_less(a.vehicle_id, b.vehicle_id);
  return a.contract_index < b.contract_index;
}

std::string BmsStructure::to_string() const {
  std::string s = "psi=" + std::to_string(psi);
  s += ",l_min=" + (l_min ? std::to_string(*l_min) : std::string("-inf"));
  s += ",l_max=" + (l_max ? std::to_string(*l_max) : std::string("+inf"));
  return s;
}

void BmsStructure::validate() const {
  if (psi < 1) throw ArgumentError("BMS jump parameter psi must be >= 1");
  if (l_min && *l_min > l_start)
    throw ArgumentError("BMS l_min must not exceed the start level: " + to_string());
  if (l_max && *l_max < l_start)
    throw ArgumentError("BMS l_max must not be below the start level: " + to_string());
}

char to_char(InsuredType type) { return static_cast<char>('A' + static_cast<int>(type)); }

// ---------------------------------------------------------------------------
// Portfolio

Portfolio::Portfolio(std::vector<ContractRecord> contracts, std::vector<ClaimRecord> claims,
                     std::vector<std::string> covariate_names)
    : contracts_(std::move(contracts)),
      claims_(std::move(claims)),
      covariate_names_(std::move(covariate_names)) {
  const std::size_t width = covariate_names_.size() + 1;
  for (const auto& c : contracts_) {
    const auto key = key_of_contract(c).to_string();
    if (!(c.exposure > 0.0) || !std::isfinite(c.exposure))
      throw ArgumentError("contract " + key + ": exposure must be positive");
    if (c.claim_count < 0) throw ArgumentError("contract " + key + ": negative claim_count");
    if (c.contract_index < 1) throw ArgumentError("contract " + key + ": contract_index must be >= 1");
    if (c.covariates.size() != width)
      throw ArgumentError("contract " + key + ": covariate vector has wrong length");
    if (c.covariates[0] != 1.0)
      throw ArgumentError("contract " + key + ": first covariate must be the intercept 1");
  }
  std::stable_sort(contracts_.begin(), contracts_.end(), [](const auto& a, const auto& b) {
    return key_less(key_of_contract(a), key_of_contract(b));
  });
  std::stable_sort(claims_.begin(), claims_.end(), [](const auto& a, const auto& b) {
    auto ka = key_of_claim(a), kb = key_of_claim(b);
    if (key_less(ka, kb)) return true;
    if (key_less(kb, ka)) return false;
    return a.claim_ordinal < b.claim_ordinal;
  });

  std::vector<std::string> bad;
  for (std::size_t i = 1; i < contracts_.size(); ++i)
    if (same_key(key_of_contract(contracts_[i - 1]), key_of_contract(contracts_[i])))
      bad.push_back(key_of_contract(contracts_[i]).to_string());
  if (!bad.empty()) throw ConsistencyError("duplicate contract keys", bad);

  // Per-vehicle ordering and per-policy year/index agreement.
  for (std::size_t i = 1; i < contracts_.size(); ++i) {
    const auto& a = contracts_[i - 1];
    const auto& b = contracts_[i];
    if (a.policy_id == b.policy_id && a.vehicle_id == b.vehicle_id &&
        !(std::chrono::sys_days{a.effective_date} < std::chrono::sys_days{b.effective_date}))
      bad.push_back(key_of_contract(b).to_string());
  }
  if (!bad.empty())
    throw ConsistencyError("contract_index not increasing with effective_date", bad);

  index();

  for (const auto& [first, last] : policy_ranges_) {
    std::map<int, int> year_to_index;
    std::map<int, int> index_to_year;
    for (std::size_t i = first; i < last; ++i) {
      const auto& c = contracts_[i];
      const int year = static_cast<int>(c.effective_date.year());
      auto [it, fresh] = year_to_index.emplace(year, c.contract_index);
      auto [jt, fresh2] = index_to_year.emplace(c.contract_index, year);
      if ((!fresh && it->second != c.contract_index) || (!fresh2 && jt->second != year))
        bad.push_back(key_of_contract(c).to_string());
    }
  }
  if (!bad.empty())
    throw ConsistencyError("contracts of one policy with equal effective year must share contract_index",
                           bad);

  // Claims: referential integrity, ordinals 1..n, positive costs, count match.
  std::size_t ci = 0;
  for (std::size_t k = 0; k < claims_.size(); ++k) {
    const auto& cl = claims_[k];
    auto key = key_of_claim(cl);
    while (ci < contracts_.size() && key_less(key_of_contract(contracts_[ci]), key)) ++ci;
    if (ci == contracts_.size() || !same_key(key_of_contract(contracts_[ci]), key))
      bad.push_back(key.to_string());
    if (!(cl.cost > 0.0) || !std::isfinite(cl.cost))
      throw ArgumentError("claim " + key.to_string() + ": cost must be positive");
  }
  if (!bad.empty())
    throw ConsistencyError("claims without a matching contract", bad);
  for (std::size_t i = 0; i < contracts_.size(); ++i) {
    auto cls = claims_of(i);
    bool ok = static_cast<int>(cls.size()) == contracts_[i].claim_count;
    for (std::size_t k = 0; ok && k < cls.size(); ++k)
      ok = cls[k].claim_ordinal == static_cast<int>(k) + 1;
    if (!ok) bad.push_back(key_of(i).to_string());
  }
  if (!bad.empty())
    throw ConsistencyError("claims file disagrees with claim_count (or ordinals not 1..n)", bad);
}

void Portfolio::index() {
  claim_offsets_.assign(contracts_.size() + 1, 0);
  std::size_t k = 0;
  for (std::size_t i = 0; i < contracts_.size(); ++i) {
    claim_offsets_[i] = k;
    auto key = key_of_contract(contracts_[i]);
    while (k < claims_.size() && key_less(key_of_claim(claims_[k]), key)) ++k;
    claim_offsets_[i] = k;
    while (k < claims_.size() && same_key(key_of_claim(claims_[k]), key)) ++k;
  }
  claim_offsets_[contracts_.size()] = k;
  // claims_of(i) is [claim_offsets_[i], end_i); end_i is recomputed lazily below.
  policy_ranges_.clear();
  for (std::size_t i = 0; i < contracts_.size();) {
    std::size_t j = i + 1;
    while (j < contracts_.size() && contracts_[j].policy_id == contracts_[i].policy_id) ++j;
    policy_ranges_.emplace_back(i, j);
    i = j;
  }
}

std::span<const ClaimRecord> Portfolio::claims_of(std::size_t i) const {
  std::size_t begin = claim_offsets_[i];
  std::size_t end = begin;
  const auto& c = contracts_[i];
  while (end < claims_.size() && claims_[end].contract_index == c.contract_index &&
         claims_[end].vehicle_id == c.vehicle_id && claims_[end].policy_id == c.policy_id)
    ++end;
  return {claims_.data() + begin, end - begin};
}

double Portfolio::loss_of(std::size_t i) const {
  double total = 0.0;
  for (const auto& c : claims_of(i)) total += c.cost;
  return total;
}

std::optional<std::size_t> Portfolio::find(const ContractKey& key) const {
  auto it = std::lower_bound(contracts_.begin(), contracts_.end(), key,
                             [](const ContractRecord& c, const ContractKey& k) {
                               return key_less(key_of_contract(c), k);
                             });
  if (it == contracts_.end() || !same_key(key_of_contract(*it), key)) return std::nullopt;
  return static_cast<std::size_t>(it - contracts_.begin());
}

ContractKey Portfolio::key_of(std::size_t i) const { return key_of_contract(contracts_[i]); }

Portfolio Portfolio::subset_policies(std::span<const std::size_t> policy_indices) const {
  std::vector<ContractRecord> contracts;
  std::vector<ClaimRecord> claims;
  for (std::size_t p : policy_indices) {
    const auto [first, last] = policy_ranges_.at(p);
    for (std::size_t i = first; i < last; ++i) {
      contracts.push_back(contracts_[i]);
      for (const auto& c : claims_of(i)) claims.push_back(c);
    }
  }
  return Portfolio(std::move(contracts), std::move(claims), covariate_names_);
}

Portfolio Portfolio::from_year(int first_year) const {
  std::vector<ContractRecord> contracts;
  std::vector<ClaimRecord> claims;
  for (std::size_t i = 0; i < contracts_.size(); ++i) {
    if (contracts_[i].calendar_year < first_year) continue;
    contracts.push_back(contracts_[i]);
    for (const auto& c : claims_of(i)) claims.push_back(c);
  }
  return Portfolio(std::move(contracts), std::move(claims), covariate_names_);
}

// ---------------------------------------------------------------------------
// CSV input/output

Portfolio read_portfolio(std::istream& contracts_in, std::istream& claims_in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(contracts_in, line)) throw ParseError("contracts file is empty", 1);
  auto header = split_csv_line(line);
  if (header.size() < kFixedContractColumns) throw ParseError("contracts header too short", 1);
  for (std::size_t k = 0; k < kFixedContractColumns; ++k)
    if (header[k] != kContractColumns[k])
      throw ParseError("contracts header column " + std::to_string(k + 1) + " must be '" +
                           kContractColumns[k] + "'",
                       1);
  std::vector<std::string> covariate_names;
  for (std::size_t k = kFixedContractColumns; k < header.size(); ++k)
    covariate_names.emplace_back(header[k]);

  std::vector<ContractRecord> contracts;
  while (std::getline(contracts_in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(f.size()),
                       line_no);
    ContractRecord c;
    c.policy_id = std::string(f[0]);
    c.vehicle_id = std::string(f[1]);
    long idx = 0, count = 0, year = 0;
    if (c.policy_id.empty() || c.vehicle_id.empty()) throw ParseError("empty identifier", line_no);
    if (!parse_int(f[2], idx)) throw ParseError("bad contract_index", line_no);
    auto date = parse_date(f[3]);
    if (!date) throw ParseError("bad effective_date (want YYYY-MM-DD)", line_no);
    if (!parse_double(f[4], c.exposure) || !(c.exposure > 0))
      throw ParseError("bad exposure", line_no);
    if (!parse_int(f[5], count) || count < 0) throw ParseError("bad claim_count", line_no);
    if (!parse_int(f[6], year)) throw ParseError("bad calendar_year", line_no);
    c.contract_index = static_cast<int>(idx);
    if (c.contract_index < 1) throw ParseError("contract_index must be >= 1", line_no);
    c.effective_date = *date;
    c.claim_count = static_cast<int>(count);
    c.calendar_year = static_cast<int>(year);
    c.covariates.reserve(1 + covariate_names.size());
    c.covariates.push_back(1.0);
    for (std::size_t k = kFixedContractColumns; k < f.size(); ++k) {
      double v = 0;
      if (!parse_double(f[k], v))
        throw ParseError("bad covariate '" + std::string(header[k]) + "'", line_no);
      c.covariates.push_back(v);
    }
    contracts.push_back(std::move(c));
  }

  line_no = 1;
  if (!std::getline(claims_in, line)) throw ParseError("claims file is empty (header required)", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kClaimsHeader) throw ParseError(std::string("claims header must be '") + kClaimsHeader + "'", 1);
  std::vector<ClaimRecord> claims;
  while (std::getline(claims_in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) throw ParseError("expected 5 fields", line_no);
    ClaimRecord c;
    c.policy_id = std::string(f[0]);
    c.vehicle_id = std::string(f[1]);
    long idx = 0, ord = 0;
    if (!parse_int(f[2], idx)) throw ParseError("bad contract_index", line_no);
    if (!parse_int(f[3], ord) || ord < 1) throw ParseError("bad claim_ordinal", line_no);
    if (!parse_double(f[4], c.cost) || !(c.cost > 0)) throw ParseError("bad cost", line_no);
    c.contract_index = static_cast<int>(idx);
    c.claim_ordinal = static_cast<int>(ord);
    claims.push_back(std::move(c));
  }
  return Portfolio(std::move(contracts), std::move(claims), std::move(covariate_names));
}

Portfolio load_portfolio(const std::filesystem::path& contracts_path,
                         const std::filesystem::path& claims_path) {
  std::ifstream contracts(contracts_path);
  if (!contracts) throw ParseError("cannot open " + contracts_path.string());
  std::ifstream claims(claims_path);
  if (!claims) throw ParseError("cannot open " + claims_path.string());
  return read_portfolio(contracts, claims);
}

void write_contracts(std::ostream& out, const Portfolio& portfolio) {
  for (std::size_t k = 0; k < kFixedContractColumns; ++k) out << (k ? "," : "") << kContractColumns[k];
  for (const auto& name : portfolio.covariate_names()) out << ',' << name;
  out << '\n';
  for (const auto& c : portfolio.contracts()) {
    out << c.policy_id << ',' << c.vehicle_id << ',' << c.contract_index << ','
        << format_date(c.effective_date) << ',' << format_double(c.exposure) << ','
        << c.claim_count << ',' << c.calendar_year;
    for (std::size_t k = 1; k < c.covariates.size(); ++k) out << ',' << format_double(c.covariates[k]);
    out << '\n';
  }
}

void write_claims(std::ostream& out, const Portfolio& portfolio) {
  out << kClaimsHeader << '\n';
  for (const auto& c : portfolio.claims())
    out << c.policy_id << ',' << c.vehicle_id << ',' << c.contract_index << ',' << c.claim_ordinal
        << ',' << format_double(c.cost) << '\n';
}

void save_portfolio(const Portfolio& portfolio, const std::filesystem::path& contracts_path,
                    const std::filesystem::path& claims_path) {
  std::ofstream contracts(contracts_path, std::ios::binary);
  std::ofstream claims(claims_path, std::ios::binary);
  if (!contracts || !claims) throw Error("cannot write portfolio files");
  write_contracts(contracts, portfolio);
  write_claims(claims, portfolio);
}

// ---------------------------------------------------------------------------
// Scope variables and levels

std::vector<ScopeSummary> compute_scope(const Portfolio& portfolio, int window_years) {
  if (window_years < 1) throw ArgumentError("window_years must be >= 1");
  const auto& contracts = portfolio.contracts();
  std::vector<ScopeSummary> out(contracts.size());
  for (const auto& [first, last] : portfolio.policy_ranges()) {
    std::map<int, int> year_claims;  // policy-level totals per active calendar year
    for (std::size_t i = first; i < last; ++i)
      year_claims[contracts[i].calendar_year] += contracts[i].claim_count;
    for (std::size_t i = first; i < last; ++i) {
      const int year = contracts[i].calendar_year;
      auto& s = out[i];
      for (auto it = year_claims.lower_bound(year - window_years);
           it != year_claims.end() && it->first < year; ++it) {
        ++s.years_observed;
        s.n_dotdot += it->second;
        if (it->second == 0) ++s.kappa_dotdot;
        s.window_claims.push_back(it->second);
      }
    }
  }
  return out;
}

namespace {
std::pair<std::size_t, std::size_t> policy_range_of(const Portfolio& portfolio, std::size_t contract) {
  const auto& ranges = portfolio.policy_ranges();
  auto it = std::upper_bound(ranges.begin(), ranges.end(), contract,
                             [](std::size_t c, const auto& r) { return c < r.second; });
  return *it;
}
}  // namespace

std::optional<int> vehicle_lag_claims(const Portfolio& portfolio, std::size_t contract, int lag) {
  const auto& cs = portfolio.contracts();
  const auto& c = cs.at(contract);
  const auto [first, last] = policy_range_of(portfolio, contract);
  for (std::size_t i = first; i < last; ++i)
    if (cs[i].vehicle_id == c.vehicle_id && cs[i].calendar_year == c.calendar_year - lag)
      return cs[i].claim_count;
  return std::nullopt;
}

std::optional<int> policy_lag_claims(const Portfolio& portfolio, std::size_t contract, int lag) {
  const auto& cs = portfolio.contracts();
  const auto& c = cs.at(contract);
  const auto [first, last] = policy_range_of(portfolio, contract);
  std::optional<int> total;
  for (std::size_t i = first; i < last; ++i)
    if (cs[i].calendar_year == c.calendar_year - lag) total = total.value_or(0) + cs[i].claim_count;
  return total;
}

namespace {
long clamp_level(long level, const BmsStructure& s) {
  if (s.l_min) level = std::max<long>(level, *s.l_min);
  if (s.l_max) level = std::min<long>(level, *s.l_max);
  return level;
}
}  // namespace

int bms_level(const ScopeSummary& scope, const BmsStructure& structure) {
  long level = static_cast<long>(structure.l_start) - scope.kappa_dotdot +
               static_cast<long>(structure.psi) * scope.n_dotdot;
  return static_cast<int>(clamp_level(level, structure));
}

int bms_level_recursive(std::span<const int> yearly_claims, const BmsStructure& structure) {
  long level = structure.l_start;
  for (int n : yearly_claims) {
    level += (n == 0) ? -1 : static_cast<long>(structure.psi) * n;
    level = clamp_level(level, structure);
  }
  return static_cast<int>(level);
}

std::vector<int> level_trajectory(std::span<const int> yearly_claims, const BmsStructure& structure,
                                  int window_years) {
  if (window_years < 1) throw ArgumentError("window_years must be >= 1");
  std::vector<int> levels;
  levels.reserve(yearly_claims.size());
  for (std::size_t t = 0; t < yearly_claims.size(); ++t) {
    std::size_t begin = t > static_cast<std::size_t>(window_years) ? t - window_years : 0;
    levels.push_back(bms_level_recursive(yearly_claims.subspan(begin, t - begin), structure));
  }
  return levels;
}

// ---------------------------------------------------------------------------
// Splitting and classification

SideDiagnostics describe(const Portfolio& portfolio) {
  SideDiagnostics d;
  d.policies = portfolio.policy_ranges().size();
  d.contracts = portfolio.size();
  double cost = 0.0;
  for (const auto& c : portfolio.contracts()) {
    d.exposure += c.exposure;
    d.claims += c.claim_count;
  }
  for (const auto& c : portfolio.claims()) cost += c.cost;
  d.claim_frequency = d.exposure > 0 ? static_cast<double>(d.claims) / d.exposure : 0.0;
  d.mean_severity = d.claims > 0 ? cost / static_cast<double>(d.claims) : 0.0;
  return d;
}

TrainTestSplit split_train_test(const Portfolio& portfolio, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("train_fraction must lie strictly between 0 and 1");
  if (portfolio.empty()) throw ArgumentError("cannot split an empty portfolio");
  const auto& ranges = portfolio.policy_ranges();
  const std::size_t m = ranges.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> order(m);
  for (std::size_t p = 0; p < m; ++p) {
    const auto& id = portfolio.contracts()[ranges[p].first].policy_id;
    order[p] = {splitmix64(seed ^ fnv1a64(id)), p};
  }
  std::sort(order.begin(), order.end());
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(m)));
  if (m >= 2) n_train = std::clamp<std::size_t>(n_train, 1, m - 1);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t k = 0; k < m; ++k) (k < n_train ? train_idx : test_idx).push_back(order[k].second);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  TrainTestSplit split{portfolio.subset_policies(train_idx), portfolio.subset_policies(test_idx), {}, {}};
  split.train_stats = describe(split.train);
  split.test_stats = describe(split.test);
  return split;
}

InsuredType classify_insured_type(const ScopeSummary& scope, int past_contract_count) {
  if (past_contract_count <= 1) return InsuredType::A;
  if (past_contract_count <= 3) return InsuredType::B;
  if (past_contract_count <= 5) return InsuredType::C;
  if (scope.n_dotdot == 0) return InsuredType::D;
  if (scope.n_dotdot == 1) return InsuredType::E;
  return InsuredType::F;
}

}  // namespace exprate
