#include "tabhash/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "tabhash/bounds.hpp"
#include "tabhash/experiments.hpp"
#include "tabhash/format.hpp"
#include "tabhash/moments.hpp"

namespace tabhash {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_real(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double x = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(x)) throw std::invalid_argument(text);
    return x;
  } catch (const std::exception&) {
    throw ParseError("malformed " + what + ": '" + text + "'");
  }
}

// "kind:a=1,b=2" -> kind, {a: 1, b: 2}.
std::pair<std::string, std::map<std::string, std::string>> split_descriptor(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParseError("descriptor needs 'kind:...': '" + text + "'");
  std::map<std::string, std::string> fields;
  for (const auto& part : split(text.substr(colon + 1), ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError("malformed field '" + part + "' in '" + text + "'");
    if (!fields.emplace(part.substr(0, eq), part.substr(eq + 1)).second)
      throw ParseError("duplicate field '" + part.substr(0, eq) + "' in '" + text + "'");
  }
  return {text.substr(0, colon), fields};
}

unsigned take_unsigned(std::map<std::string, std::string>& f, const std::string& name, const std::string& text) {
  const auto it = f.find(name);
  if (it == f.end()) throw ParseError("missing field '" + name + "' in '" + text + "'");
  const auto v = parse_u64(it->second);
  f.erase(it);
  if (v > 64) throw ParseError("field '" + name + "' out of range in '" + text + "'");
  return static_cast<unsigned>(v);
}

SchemeKind parse_kind(const std::string& s) {
  if (s == "simple") return SchemeKind::simple;
  if (s == "mixed") return SchemeKind::mixed;
  if (s == "random" || s == "fully_random") return SchemeKind::fully_random;
  throw ParseError("unknown scheme '" + s + "'");
}

SignMode parse_sign(const std::string& s) {
  if (s == "none") return SignMode::none;
  if (s == "simple") return SignMode::simple_sign;
  if (s == "mixed") return SignMode::mixed_sign;
  throw ParseError("unknown sign mode '" + s + "'");
}

std::vector<std::uint64_t> parse_u64_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_u64(part));
  return out;
}

}  // namespace

SchemeDescriptor parse_scheme(const std::string& text) {
  auto [kind, fields] = split_descriptor(text);
  SchemeDescriptor s;
  s.kind = parse_kind(kind);
  s.params.char_bits = take_unsigned(fields, "k", text);
  s.params.num_chars = take_unsigned(fields, "c", text);
  s.params.range_bits = take_unsigned(fields, "l", text);
  s.params.derived_chars = s.kind == SchemeKind::mixed ? take_unsigned(fields, "d", text) : 0;
  if (!fields.empty()) throw ParseError("unknown field '" + fields.begin()->first + "' in '" + text + "'");
  try {
    s.validate();
  } catch (const std::exception& e) {
    throw ParseError("invalid scheme '" + text + "': " + e.what());
  }
  return s;
}

ValueDescriptor parse_value(const std::string& text) {
  ValueDescriptor d;
  if (text.rfind("file:", 0) == 0) {
    d.kind = ValueDescriptor::Kind::file;
    d.path = text.substr(5);
    if (d.path.empty()) throw ParseError("file descriptor needs a path");
    return d;
  }
  auto [kind, fields] = split_descriptor(text);
  std::string param_name;
  if (kind == "bin") {
    d.kind = ValueDescriptor::Kind::bin;
    param_name = "target";
  } else if (kind == "threshold") {
    d.kind = ValueDescriptor::Kind::threshold;
    param_name = "l";
  } else {
    throw ParseError("unknown value kind '" + kind + "'");
  }
  const auto p = fields.find(param_name);
  if (p == fields.end()) throw ParseError("missing field '" + param_name + "' in '" + text + "'");
  d.parameter = parse_u64(p->second);
  fields.erase(p);
  if (auto w = fields.find("w"); w != fields.end()) {
    d.weight = w->second == "uniform" ? 1.0 : parse_real(w->second, "weight");
    fields.erase(w);
  }
  if (auto k = fields.find("keys"); k != fields.end()) {
    const std::string& spec = k->second;
    if (spec == "all") {
      d.keys = ValueDescriptor::Keys::all;
    } else if (spec.rfind("random:", 0) == 0) {
      d.keys = ValueDescriptor::Keys::random;
      d.key_count = parse_u64(spec.substr(7));
    } else if (spec.rfind("cube:", 0) == 0) {
      d.keys = ValueDescriptor::Keys::cube;
      d.key_count = parse_u64(spec.substr(5));
    } else {
      throw ParseError("unknown key set '" + spec + "'");
    }
    fields.erase(k);
  }
  if (!fields.empty()) throw ParseError("unknown field '" + fields.begin()->first + "' in '" + text + "'");
  return d;
}

std::vector<WeightedKey> build_weights(const ValueDescriptor& desc, const SchemeParams& params, std::uint64_t seed) {
  std::vector<Key> keys;
  switch (desc.keys) {
    case ValueDescriptor::Keys::all:
      if (params.key_bits() > 24) throw SizeError("keys=all needs at most 24 key bits; use keys=random:<n>");
      keys = all_keys(params);
      break;
    case ValueDescriptor::Keys::random:
      keys = random_keys(params, desc.key_count, seed);
      std::sort(keys.begin(), keys.end());
      break;
    case ValueDescriptor::Keys::cube:
      if (desc.key_count < 1 || desc.key_count > params.alphabet_size()) throw ParseError("cube side out of range");
      keys = cube_keys(params, desc.key_count);
      break;
  }
  return uniform_weights(keys, desc.weight);
}

ValueFunction build_value(const ValueDescriptor& desc, const SchemeParams& params, std::uint64_t seed) {
  const std::uint64_t m = params.range_size();
  switch (desc.kind) {
    case ValueDescriptor::Kind::bin:
      return ValueFunction::single_bin(build_weights(desc, params, seed), desc.parameter, m);
    case ValueDescriptor::Kind::threshold:
      return ValueFunction::threshold(build_weights(desc, params, seed), desc.parameter, m);
    case ValueDescriptor::Kind::file: {
      std::ifstream in(desc.path);
      if (!in) throw ParseError("cannot read value file '" + desc.path + "'");
      std::vector<SparseEntry> entries;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line, ',');
        if (cells.size() != 3) throw ParseError("value file rows are key,bin,value: '" + line + "'");
        if (cells[0] == "key") continue;
        entries.push_back({Key{parse_u64(cells[0])}, parse_u64(cells[1]), parse_real(cells[2], "value")});
      }
      return ValueFunction::custom_sparse(entries, m);
    }
  }
  throw ParseError("bad value descriptor");
}

std::vector<double> parse_p_list(const std::string& text) {
  std::vector<double> ps;
  for (const auto& part : split(text, ',')) {
    const double p = parse_real(part, "p");
    if (p < 2.0) throw ParseError("p must be at least 2: '" + part + "'");
    ps.push_back(p);
  }
  if (ps.empty()) throw ParseError("empty p list");
  return ps;
}

std::uint64_t parse_u64(const std::string& text) {
  if (text.empty() || text[0] == '-' || text[0] == '+') throw ParseError("malformed integer '" + text + "'");
  try {
    std::size_t used = 0;
    const bool hex = text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X');
    const auto v = std::stoull(hex ? text.substr(2) : text, &used, hex ? 16 : 10);
    if (used != text.size() - (hex ? 2 : 0)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError("malformed integer '" + text + "'");
  }
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["scheme"] = scheme;
  j["value"] = value;
  j["p"] = ps;
  j["mode"] = mode;
  j["samples"] = samples;
  j["seed"] = seed;
  j["sign"] = sign;
  j["query"] = query ? nlohmann::ordered_json(*query) : nlohmann::ordered_json(nullptr);
  j["theorem"] = theorem;
  j["grid"] = grid;
  j["query_sweep"] = query_sweep;
  j["format"] = format;
  j["max_abs"] = max_abs;
  j["sigma2"] = sigma2;
  j["keys"] = keys;
  j["key_count"] = key_count;
  j["balls"] = balls;
  j["red_fraction"] = red_fraction;
  j["bins"] = bins;
  j["trials"] = trials;
  j["permute_seed"] = permute_seed ? nlohmann::ordered_json(*permute_seed) : nlohmann::ordered_json(nullptr);
  j["strict"] = strict;
  j["bench_keys"] = bench_keys;
  j["quick"] = quick;
  j["inject_fault"] = inject_fault;
  return j;
}

std::string RunConfig::config_hash() const { return hex64(fnv1a(to_json().dump())); }

std::string csv_header(const RunConfig& config) {
  return "# tabhash config_hash=" + config.config_hash() + " config=" + config.to_json().dump() + "\n";
}

void apply_config_json(RunConfig& c, const nlohmann::json& j, const std::vector<std::string>& given) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  auto is_given = [&](const std::string& key) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    return std::find(given.begin(), given.end(), flag) != given.end();
  };
  auto u64 = [](const nlohmann::json& v) -> std::uint64_t {
    if (v.is_string()) return parse_u64(v.get<std::string>());
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    throw UsageError("expected an unsigned integer, got " + v.dump());
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "command") {
      if (v.get<std::string>() != c.command)
        throw UsageError("config is for '" + v.get<std::string>() + "', not '" + c.command + "'");
      continue;
    }
    if (is_given(key)) continue;
    try {
      if (key == "scheme") c.scheme = v.get<std::string>();
      else if (key == "value") c.value = v.get<std::string>();
      else if (key == "p") c.ps = v.get<std::vector<double>>();
      else if (key == "mode") c.mode = v.get<std::string>();
      else if (key == "samples") c.samples = u64(v);
      else if (key == "seed") c.seed = u64(v);
      else if (key == "sign") c.sign = v.get<std::string>();
      else if (key == "query") c.query = v.is_null() ? std::nullopt : std::optional<std::uint64_t>(u64(v));
      else if (key == "theorem") c.theorem = v.get<std::string>();
      else if (key == "grid") c.grid = v.get<std::string>();
      else if (key == "query_sweep") c.query_sweep = v.get<bool>();
      else if (key == "format") c.format = v.get<std::string>();
      else if (key == "max_abs") c.max_abs = v.get<double>();
      else if (key == "sigma2") c.sigma2 = v.get<double>();
      else if (key == "keys") c.keys = v.get<std::vector<std::uint64_t>>();
      else if (key == "key_count") c.key_count = u64(v);
      else if (key == "balls") c.balls = u64(v);
      else if (key == "red_fraction") c.red_fraction = v.get<double>();
      else if (key == "bins") c.bins = u64(v);
      else if (key == "trials") c.trials = u64(v);
      else if (key == "permute_seed") c.permute_seed = v.is_null() ? std::nullopt : std::optional<std::uint64_t>(u64(v));
      else if (key == "strict") c.strict = v.get<bool>();
      else if (key == "bench_keys") c.bench_keys = u64(v);
      else if (key == "quick") c.quick = v.get<bool>();
      else if (key == "inject_fault") c.inject_fault = v.get<bool>();
      else if (key == "output") c.output = v.get<std::string>();
      else if (key == "threads") c.threads = static_cast<unsigned>(u64(v));
      else throw UsageError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    } catch (const ParseError& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig c;
  CLI::App app{"Tabulation hashing moment bounds and experiments", "tabhash"};
  app.require_subcommand(1, 1);
  std::string p_text, seed_text, query_text, keys_text, permute_text;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", c.config_path, "JSON file supplying options not given on the command line");
    s->add_option("--out", c.output, "Output path (default stdout)");
    s->add_option("--threads", c.threads, "Worker threads (TABHASH_THREADS overrides)")->check(CLI::PositiveNumber);
    s->add_option("--seed", seed_text, "Base seed, decimal or 0x-hex");
  };
  auto scheme = [&](CLI::App* s) { s->add_option("--scheme", c.scheme, "e.g. simple:k=8,c=4,l=16"); };
  auto plist = [&](CLI::App* s) { s->add_option("--p", p_text, "Comma-separated p values >= 2"); };
  auto format = [&](CLI::App* s) {
    s->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };

  auto* hash = app.add_subcommand("hash", "Hash keys with a seeded scheme");
  common(hash);
  scheme(hash);
  hash->add_option("--keys", keys_text, "Comma-separated keys");
  hash->add_option("--key-count", c.key_count, "Hash keys 0..n-1");

  auto* moments = app.add_subcommand("moments", "Central p-norms of a hash-based sum");
  common(moments);
  scheme(moments);
  plist(moments);
  format(moments);
  moments->add_option("--value", c.value, "e.g. bin:target=0,w=uniform");
  moments->add_option("--mode", c.mode, "exact or mc")->check(CLI::IsMember({"exact", "mc"}));
  moments->add_option("--samples", c.samples, "Monte Carlo samples");
  moments->add_option("--sign", c.sign, "none, simple or mixed")->check(CLI::IsMember({"none", "simple", "mixed"}));
  moments->add_option("--query", query_text, "Query key; uses the collision value function on the value's keys");

  auto* bounds = app.add_subcommand("bounds", "Evaluate Psi_p");
  common(bounds);
  plist(bounds);
  bounds->add_option("--max-abs", c.max_abs, "M");
  bounds->add_option("--sigma2", c.sigma2, "sigma^2");

  auto* sweep = app.add_subcommand("sweep", "Empirical norms against theorem bounds");
  common(sweep);
  sweep->add_option("--theorem", c.theorem, "random, simple or mixed")
      ->check(CLI::IsMember({"random", "simple", "mixed"}));
  sweep->add_option("--grid", c.grid, "std or tiny")->check(CLI::IsMember({"std", "tiny"}));
  sweep->add_option("--samples", c.samples, "Monte Carlo samples per point");
  sweep->add_flag("--query-sweep", c.query_sweep, "Query-conditioned sweep");

  auto* lower = app.add_subcommand("lowerbound", "Exact norms of the lower-bound instance");
  common(lower);
  scheme(lower);
  plist(lower);

  auto* minhash = app.add_subcommand("minhash", "k-partition MinHash");
  common(minhash);
  scheme(minhash);
  format(minhash);
  minhash->add_option("--balls", c.balls, "n");
  minhash->add_option("--red-fraction", c.red_fraction, "f");
  minhash->add_option("--bins", c.bins, "k, a power of two");
  minhash->add_option("--trials", c.trials, "Trials");
  minhash->add_option("--permute-seed", permute_text, "Color a random subset red");
  minhash->add_flag("--strict", c.strict, "Enforce k <= |Sigma| / (4 d ln|Sigma|)");

  auto* bench = app.add_subcommand("bench", "Throughput of simple and mixed tabulation");
  common(bench);
  scheme(bench);
  bench->add_option("--bench-keys", c.bench_keys, "Keys hashed per timing");

  auto* self = app.add_subcommand("selftest", "Invariant suite");
  common(self);
  self->add_flag("--quick", c.quick, "Enumeration-only suite");
  self->add_flag("--inject-fault", c.inject_fault, "Corrupt a table (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help());
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    throw UsageError(std::string(e.what()) + "\n" + sub->help());
  }
  CLI::App* sub = app.get_subcommands().front();
  c.command = sub->get_name();
  if (c.command == "minhash" && c.scheme.empty()) c.scheme = "mixed:k=8,c=4,d=1,l=32";
  if (c.command == "bench" && c.scheme.empty()) c.scheme = "simple:k=8,c=4,l=32";

  std::vector<std::string> given;
  for (const auto* opt : sub->get_options())
    if (opt->count() > 0) given.push_back(opt->get_single_name());
  try {
    if (!p_text.empty()) c.ps = parse_p_list(p_text);
    if (!seed_text.empty()) c.seed = parse_u64(seed_text);
    if (!query_text.empty()) c.query = parse_u64(query_text);
    if (!keys_text.empty()) c.keys = parse_u64_list(keys_text);
    if (!permute_text.empty()) c.permute_seed = parse_u64(permute_text);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw UsageError("--config: cannot read '" + c.config_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("--config: ") + e.what());
    }
    apply_config_json(c, j, given);
  }
  if (const char* env = std::getenv("TABHASH_THREADS"); env && *env) {
    try {
      c.threads = static_cast<unsigned>(parse_u64(env));
    } catch (const ParseError&) {
      throw UsageError("TABHASH_THREADS must be a positive integer");
    }
  }
  if (c.threads < 1) throw UsageError("--threads must be positive");

  const bool needs_scheme = c.command == "hash" || c.command == "moments" || c.command == "lowerbound";
  if (needs_scheme && c.scheme.empty()) throw UsageError("--scheme is required for " + c.command);
  if (c.command == "moments" && c.value.empty()) throw UsageError("--value is required for moments");
  if (c.command == "hash" && c.keys.empty() && c.key_count == 0)
    throw UsageError("hash needs --keys or --key-count");
  try {
    if (!c.scheme.empty()) parse_scheme(c.scheme);
    if (!c.value.empty()) parse_value(c.value);
    for (double p : c.ps)
      if (!(p >= 2.0)) throw ParseError("p must be at least 2");
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  return c;
}

int run(const RunConfig& c, std::ostream& out_default, std::ostream& err) {
  std::ofstream file;
  if (!c.output.empty()) {
    file.open(c.output, std::ios::binary);
    if (!file) throw UsageError("--out: cannot write '" + c.output + "'");
  }
  std::ostream& out = c.output.empty() ? out_default : file;
  const bool csv = c.format == "csv";
  const std::uint64_t key_seed = derive_seed(c.seed, fnv1a("keys"));

  if (c.command == "selftest") return selftest(c.quick, c.inject_fault, c.threads, out);

  if (c.command == "hash") {
    const auto scheme = parse_scheme(c.scheme);
    const auto h = make_hash(scheme, c.seed);
    std::vector<std::uint64_t> keys = c.keys;
    for (std::uint64_t i = 0; i < c.key_count; ++i) keys.push_back(i);
    out << csv_header(c) << "key,hash\n";
    for (auto k : keys) {
      if (!scheme.params.valid_key(Key{k})) throw UsageError("key " + std::to_string(k) + " does not fit the scheme");
      out << k << ',' << evaluate(h, Key{k}) << '\n';
    }
    return kExitOk;
  }

  if (c.command == "moments") {
    MomentRequest req;
    req.scheme = parse_scheme(c.scheme);
    req.ps = c.ps;
    req.mode = c.mode == "exact" ? MomentMode::exact : MomentMode::monte_carlo;
    req.samples = c.samples;
    req.base_seed = c.seed;
    req.sign_mode = parse_sign(c.sign);
    req.threads = c.threads;
    const auto desc = parse_value(c.value);
    MomentReport report;
    if (c.query) {
      if (desc.kind == ValueDescriptor::Kind::file) throw UsageError("--query needs a bin or threshold key set");
      const auto v = QueryValueFunction::collision(build_weights(desc, req.scheme.params, key_seed), Key{*c.query},
                                                   req.scheme.params.range_size());
      report = estimate_query_moments(req, v);
    } else {
      report = estimate_moments(req, build_value(desc, req.scheme.params, key_seed));
    }
    if (csv)
      out << csv_header(c) << report.to_csv();
    else
      out << report.to_json() << '\n';
    return kExitOk;
  }

  if (c.command == "bounds") {
    Table t{{"p", "case", "psi", "psi_sup_form", "lower", "upper"}, {}};
    for (double p : c.ps) {
      const PsiInput in{p, c.max_abs, c.sigma2};
      const double lower = 0.5 * std::sqrt(p * c.sigma2);
      t.add({format_double(p), std::to_string(static_cast<int>(psi_case(in))), format_double(psi(in)),
             format_double(psi_sup_form(in)), format_double(lower),
             format_double(std::max(lower, p * c.max_abs / (2 * std::numbers::e)))});
    }
    out << csv_header(c) << t.to_csv();
    return kExitOk;
  }

  if (c.command == "sweep") {
    SweepConfig cfg;
    cfg.theorem = parse_kind(c.theorem);
    cfg.grid = c.grid == "tiny" ? SweepGrid::tiny : SweepGrid::standard;
    cfg.samples = c.samples;
    cfg.base_seed = c.seed;
    cfg.threads = c.threads;
    out << csv_header(c);
    if (c.query_sweep)
      out << query_sweep_table(run_query_sweep(cfg)).to_csv();
    else
      out << sweep_table(run_bound_sweep(cfg)).to_csv();
    return kExitOk;
  }

  if (c.command == "lowerbound") {
    const auto scheme = parse_scheme(c.scheme);
    if (scheme.kind != SchemeKind::simple) throw UsageError("lowerbound needs a simple scheme");
    out << csv_header(c) << lower_bound_table(lower_bound_sweep(scheme.params, c.ps)).to_csv();
    return kExitOk;
  }

  if (c.command == "minhash") {
    KPartitionConfig cfg;
    cfg.scheme = parse_scheme(c.scheme);
    cfg.n_balls = c.balls;
    cfg.red_fraction = c.red_fraction;
    cfg.k_bins = c.bins;
    cfg.trials = c.trials;
    cfg.base_seed = c.seed;
    cfg.color_permutation_seed = c.permute_seed;
    cfg.strict = c.strict;
    cfg.threads = c.threads;
    const auto rep = minhash_kpartition(cfg);
    if (csv) {
      Table t{{"trial", "estimate", "error", "nonempty_bins", "y"}, {}};
      for (std::size_t i = 0; i < rep.trials.size(); ++i) {
        const auto& tr = rep.trials[i];
        t.add({std::to_string(i), format_double(tr.estimate), format_double(tr.error),
               std::to_string(tr.nonempty_bins), std::to_string(tr.y)});
      }
      out << csv_header(c) << t.to_csv();
    } else {
      nlohmann::ordered_json j;
      j["q"] = rep.q;
      j["expected_y"] = rep.expected_y;
      j["y_band"] = rep.y_band;
      j["error_threshold"] = rep.error_threshold;
      j["within_error"] = rep.within_error;
      j["y_within_band"] = rep.y_within_band;
      j["within_alphabet_bound"] = rep.within_alphabet_bound;
      out << j.dump(2) << '\n';
    }
    err << "within error " << rep.within_error << "/" << rep.trials.size() << ", Y within band " << rep.y_within_band
        << "/" << rep.trials.size() << (rep.within_alphabet_bound ? "" : ", k above |Sigma|/(4d ln|Sigma|)") << '\n';
    return kExitOk;
  }

  if (c.command == "bench") {
    const auto scheme = parse_scheme(c.scheme);
    const auto r = throughput_bench(scheme.params, c.bench_keys, c.seed);
    out << "metric,value\n"
        << "keys," << r.keys << "\nsimple_ns," << format_double(r.simple_ns) << "\nmixed_ns,"
        << format_double(r.mixed_ns) << "\nratio," << format_double(r.ratio) << "\nsimple_repeat_ns,"
        << format_double(r.simple_repeat_ns) << "\nsimple_table_bytes," << r.simple_table_bytes << "\nchecksum,"
        << r.checksum << '\n';
    return kExitOk;
  }
  throw UsageError("unknown command '" + c.command + "'");
}

std::vector<SelftestRow> selftest_rows(bool quick, bool inject_fault, unsigned threads) {
  std::vector<SelftestRow> rows;
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      rows.push_back(body());
      rows.back().name = name;
    } catch (const std::exception& e) {
      rows.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };

  guarded("psi-algebra", [&] {
    const int side = quick ? 20 : 100;
    double worst = 0.0;
    std::uint64_t sandwich_fail = 0;
    for (int i = 0; i < side; ++i) {
      const double p = 2.0 * std::pow(32.0, i / (side - 1.0));
      for (int j = 0; j < side; ++j) {
        const double sigma2 = std::pow(10.0, -8.0 + 16.0 * j / (side - 1.0));
        const PsiInput in{p, 1.0, sigma2};
        const double a = psi(in), b = psi_sup_form(in);
        worst = std::max(worst, std::abs(a - b) / std::max(a, 1e-300));
        const double lo = 0.5 * std::sqrt(p * sigma2);
        const double hi = std::max(lo, p / (2 * std::numbers::e));
        sandwich_fail += !(lo <= a * (1 + 1e-12) && a <= hi * (1 + 1e-12));
      }
    }
    return SelftestRow{"", worst <= 1e-9 && sandwich_fail == 0,
                       "max rel diff " + format_double(worst) + ", sandwich failures " + std::to_string(sandwich_fail)};
  });

  guarded("xor-homomorphism", [&] {
    const SchemeParams params{8, 4, 32, 0};
    const SimpleTabHash h(params, 7);
    SplitMix64 rng(11);
    std::uint64_t bad = 0;
    for (int i = 0; i < 2000; ++i) {
      const Key x{rng() & low_mask(32)}, y{rng() & low_mask(32)}, z{rng() & low_mask(32)};
      const auto s = PositionCharSet::from_key(params, x) ^ PositionCharSet::from_key(params, y) ^
                     PositionCharSet::from_key(params, z);
      bad += h.extended(s) != (h(x) ^ h(y) ^ h(z));
    }
    return SelftestRow{"", bad == 0, std::to_string(bad) + " of 2000 triples differ"};
  });

  guarded("table-replay", [&] {
    const SchemeParams params{8, 4, 32, 0};
    const SimpleTabHash a(params, 42);
    auto entries = a.table().entries();
    if (inject_fault) entries[3] ^= 1;
    const SimpleTabHash b(params, TabulationTable::from_entries(4, 8, 32, std::move(entries)));
    std::uint64_t bad = 0;
    for (std::uint64_t x = 0; x < 4096; ++x) bad += a(Key{x}) != b(Key{x});
    return SelftestRow{"", bad == 0, std::to_string(bad) + " of 4096 keys differ on replay"};
  });

  guarded("independence", [&] {
    const auto rep = independence_test({2, 2, 2, 0}, {8, 4, 32, 0}, {8, 4, 32, 1}, quick ? 500 : 10000);
    return SelftestRow{"",
                       rep.three_wise_uniform && rep.simple_xor_zero_fraction == 1.0 &&
                           rep.mixed_xor_zero_fraction < 0.5,
                       "3-wise " + std::string(rep.three_wise_uniform ? "uniform" : "NOT uniform") +
                           ", simple xor=0 " + format_double(rep.simple_xor_zero_fraction) + ", mixed xor=0 " +
                           format_double(rep.mixed_xor_zero_fraction)};
  });

  guarded("symmetrization", [&] {
    const SchemeParams params{2, 2, 2, 0};
    const auto v = ValueFunction::single_bin(uniform_weights(all_keys(params)), 0, params.range_size());
    const auto rep = symmetrization_check(v, params, {2, 4, 8}, threads);
    return SelftestRow{"", rep.all_pass(), std::to_string(rep.rows.size()) + " p values"};
  });

  guarded("lower-bound-oracle", [&] {
    const SchemeParams params{2, 2, 1, 0};
    const auto inst = build_lower_bound_instance(params, 2.0);
    const auto oracle = lower_bound_exact_pnorms(inst, {2, 4, 8});
    MomentRequest req;
    req.scheme = {SchemeKind::simple, params};
    req.mode = MomentMode::exact;
    req.threads = threads;
    const auto exact = exact_moments(req, inst.v);
    double worst = 0.0;
    for (std::size_t i = 0; i < oracle.size(); ++i)
      worst = std::max(worst, std::abs(oracle[i] - exact.estimates[i].estimate) / exact.estimates[i].estimate);
    return SelftestRow{"", worst <= 1e-9, "max rel diff " + format_double(worst)};
  });

  if (!quick) {
    guarded("oracle-equivalence", [&] {
      std::uint64_t checked = 0, bad = 0;
      for (auto kind : {SchemeKind::simple, SchemeKind::mixed}) {
        const bool mixed = kind == SchemeKind::mixed;
        const SchemeParams params{mixed ? 1u : 2u, 2, 2, mixed ? 1u : 0u};
        const auto v = ValueFunction::single_bin(uniform_weights(all_keys(params)), 1, params.range_size());
        MomentRequest req;
        req.scheme = {kind, params};
        req.ps = {2, 4};
        req.threads = threads;
        req.mode = MomentMode::exact;
        const auto exact = exact_moments(req, v);
        req.mode = MomentMode::monte_carlo;
        req.samples = 20000;
        const auto mc = monte_carlo_moments(req, v);
        for (std::size_t i = 0; i < req.ps.size(); ++i) {
          ++checked;
          bad += std::abs(mc.estimates[i].estimate - exact.estimates[i].estimate) > 4 * mc.estimates[i].std_error;
        }
      }
      return SelftestRow{"", bad == 0, std::to_string(bad) + " of " + std::to_string(checked) + " outside 4 SE"};
    });
  }
  return rows;
}

int selftest(bool quick, bool inject_fault, unsigned threads, std::ostream& out) {
  const auto rows = selftest_rows(quick, inject_fault, threads);
  bool all = true;
  for (const auto& r : rows) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name << "  " << r.detail << '\n';
    all = all && r.pass;
  }
  return all ? kExitOk : kExitCheckFailed;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return run(parse_args(argc, argv), out, err);
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const SizeError& e) {
    err << "budget: " << e.what() << '\n';
    return kExitBudget;
  } catch (const DomainError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const RangeError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace tabhash
