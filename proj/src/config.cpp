#include "onnkit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "onnkit/error.hpp"
#include "onnkit/optim.hpp"

namespace onnkit {

NetworkSpec NetworkConfig::to_spec() const {
  NetworkSpec spec;
  spec.in_channels = in_channels;
  for (std::size_t t = 0; t < tier_sizes.size(); ++t) {
    TierSpec tier;
    tier.neurons = tier_sizes[t];
    tier.kernel = t < kernel_sizes.size() ? kernel_sizes[t] : 1;
    tier.sampling = t < sampling_factors.size() ? sampling_factors[t] : 1;
    tier.operators = t < operators.size() ? operators[t] : std::vector<std::size_t>{0};
    spec.tiers.push_back(std::move(tier));
  }
  return spec;
}

std::vector<MetricSpec> RunConfig::metric_specs() const {
  std::vector<MetricSpec> out;
  for (const MetricChoice& m : metrics) {
    MetricSpec spec = builtin_metric(m.name);
    spec.criterion = m.criterion;
    out.push_back(std::move(spec));
  }
  return out;
}

std::size_t builtin_set_count() {
  static const std::size_t count = OperatorSetLibrary::builtin().size();
  return count;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto end = s.find(sep, start);
    out.push_back(trim(s.substr(start, end == std::string_view::npos ? end : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

struct Value {
  std::string text;
  std::size_t line = 0;
};

using Section = std::map<std::string, Value, std::less<>>;

[[noreturn]] void invalid(std::size_t line, std::string_view message) {
  fail(ErrorCode::ValidationError, fmt::format("line {}: {}", line, message));
}

[[noreturn]] void malformed(std::size_t line, std::string_view message) {
  fail(ErrorCode::ParseError, fmt::format("line {}: {}", line, message));
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, std::string_view key) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    malformed(line, fmt::format("'{}' is not a valid number for {}", text, key));
  }
  return value;
}

std::size_t parse_count(std::string_view text, std::size_t line, std::string_view key) {
  if (!text.empty() && text.front() == '-') {
    invalid(line, fmt::format("{} must be non-negative, got {}", key, text));
  }
  return static_cast<std::size_t>(parse_number<std::uint64_t>(text, line, key));
}

template <typename T, typename F>
std::vector<T> parse_list(const Value& v, std::string_view key, F&& item) {
  std::vector<T> out;
  for (std::string_view part : split(v.text, ',')) {
    if (part.empty()) malformed(v.line, fmt::format("empty element in {}", key));
    out.push_back(item(part, v.line, key));
  }
  return out;
}

class Reader {
 public:
  /// Rejects keys outside `known` before anything is read, so a misspelt
  /// key is reported as such rather than as a missing one.
  Reader(Section section, std::string name, std::initializer_list<std::string_view> known)
      : section_(std::move(section)), name_(std::move(name)) {
    for (const auto& [key, value] : section_) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        malformed(value.line, fmt::format("unknown key '{}' in [{}]", key, name_));
      }
    }
  }

  const Value* get(std::string_view key) {
    const auto it = section_.find(key);
    if (it == section_.end()) return nullptr;
    return &it->second;
  }

  const Value& require(std::string_view key, std::size_t section_line) {
    const Value* v = get(key);
    if (v == nullptr) {
      invalid(section_line, fmt::format("[{}] requires '{}'", name_, key));
    }
    return *v;
  }

 private:
  Section section_;
  std::string name_;
};

void read_network(Reader& r, std::size_t section_line, NetworkConfig& n) {
  if (const Value* v = r.get("in_channels")) {
    n.in_channels = parse_count(v->text, v->line, "in_channels");
    if (n.in_channels == 0) invalid(v->line, "in_channels must be at least 1");
  }
  const Value& sizes = r.require("tier_sizes", section_line);
  n.tier_sizes = parse_list<std::size_t>(sizes, "tier_sizes", parse_count);
  for (std::size_t s : n.tier_sizes) {
    if (s == 0) invalid(sizes.line, "tier size must be at least 1");
  }
  const std::size_t tiers = n.tier_sizes.size();
  auto check_length = [&](const Value& v, std::size_t got, std::string_view key) {
    if (got != tiers) {
      invalid(v.line, fmt::format("{} has {} entries but tier_sizes has {}", key, got, tiers));
    }
  };

  const Value& kernels = r.require("kernel_sizes", section_line);
  n.kernel_sizes = parse_list<std::size_t>(kernels, "kernel_sizes", parse_count);
  check_length(kernels, n.kernel_sizes.size(), "kernel_sizes");
  for (std::size_t k : n.kernel_sizes) {
    if (k % 2 == 0) invalid(kernels.line, fmt::format("kernel size must be odd, got {}", k));
  }

  if (const Value* v = r.get("sampling_factors")) {
    n.sampling_factors = parse_list<int>(*v, "sampling_factors", parse_number<int>);
    check_length(*v, n.sampling_factors.size(), "sampling_factors");
    for (int s : n.sampling_factors) {
      if (s == 0) invalid(v->line, "sampling factor must be nonzero");
    }
  } else {
    n.sampling_factors.assign(tiers, 1);
  }

  const Value& ops = r.require("operators", section_line);
  n.operators.clear();
  for (std::string_view tier_text : split(ops.text, ';')) {
    Value tier_value{std::string(tier_text), ops.line};
    n.operators.push_back(parse_list<std::size_t>(tier_value, "operators", parse_count));
  }
  check_length(ops, n.operators.size(), "operators (';'-separated tiers)");
  const std::size_t available = builtin_set_count();
  for (std::size_t t = 0; t < tiers; ++t) {
    const auto& list = n.operators[t];
    if (list.size() != 1 && list.size() != n.tier_sizes[t]) {
      invalid(ops.line, fmt::format("tier {} lists {} operator sets for {} neurons", t + 1,
                                    list.size(), n.tier_sizes[t]));
    }
    for (std::size_t k : list) {
      if (k >= available) {
        invalid(ops.line, fmt::format("operator set {} is out of range; valid sets are 0..{}", k,
                                      available - 1));
      }
    }
  }

  if (const Value* v = r.get("k_sin")) n.constants.k_sin = parse_number<double>(v->text, v->line, "k_sin");
  if (const Value* v = r.get("k_chirp")) n.constants.k_chirp = parse_number<double>(v->text, v->line, "k_chirp");
  if (const Value* v = r.get("cut")) {
    n.constants.cut = parse_number<double>(v->text, v->line, "cut");
    if (!(n.constants.cut > 0.0)) invalid(v->line, "cut must be positive");
  }
  if (const Value* v = r.get("init")) {
    if (v->text == "uniform") {
      n.init.kind = InitKind::Uniform;
    } else if (v->text == "fan_in") {
      n.init.kind = InitKind::FanInUniform;
    } else {
      invalid(v->line, fmt::format("init must be 'uniform' or 'fan_in', got '{}'", v->text));
    }
  }
  if (const Value* v = r.get("init_bound")) {
    n.init.bound = parse_number<double>(v->text, v->line, "init_bound");
    if (!(n.init.bound > 0.0)) invalid(v->line, "init_bound must be positive");
  }
}

void read_trainer(Reader& r, TrainerConfig& t, std::vector<MetricChoice>& metrics) {
  if (const Value* v = r.get("loss")) {
    if (v->text != "mse" && v->text != "mae") {
      invalid(v->line, fmt::format("loss must be 'mse' or 'mae', got '{}'", v->text));
    }
    t.loss = v->text;
  }
  if (const Value* v = r.get("optimizer")) {
    const auto names = optimizer_names();
    if (std::find(names.begin(), names.end(), v->text) == names.end()) {
      invalid(v->line, fmt::format("unknown optimizer '{}' (supported: sgd, adam)", v->text));
    }
    t.optimizer.name = v->text;
  }
  auto real = [&](std::string_view key, double& out) {
    if (const Value* v = r.get(key)) {
      out = parse_number<double>(v->text, v->line, key);
      if (!std::isfinite(out)) invalid(v->line, fmt::format("{} must be finite", key));
    }
  };
  real("lr", t.optimizer.lr);
  real("momentum", t.optimizer.momentum);
  real("beta1", t.optimizer.beta1);
  real("beta2", t.optimizer.beta2);
  real("eps", t.optimizer.eps);
  real("lr_decay", t.optimizer.lr_decay);
  auto count = [&](std::string_view key, std::size_t& out, bool positive) {
    if (const Value* v = r.get(key)) {
      out = parse_count(v->text, v->line, key);
      if (positive && out == 0) invalid(v->line, fmt::format("{} must be at least 1", key));
    }
  };
  count("num_epochs", t.num_epochs, true);
  count("num_runs", t.num_runs, true);
  count("batch_size", t.batch_size, true);
  if (const Value* v = r.get("seed")) t.seed = parse_number<std::uint64_t>(v->text, v->line, "seed");
  if (const Value* v = r.get("model_name")) t.model_name = v->text;
  if (const Value* v = r.get("device")) {
    if (v->text != "cpu") invalid(v->line, fmt::format("device '{}' is not available (cpu)", v->text));
    t.device = v->text;
  }
  if (const Value* v = r.get("metrics")) {
    metrics.clear();
    if (!v->text.empty()) {
      for (std::string_view item : split(v->text, ',')) {
        const auto colon = item.find(':');
        MetricChoice choice;
        choice.name = std::string(trim(item.substr(0, colon)));
        try {
          const MetricSpec spec = builtin_metric(choice.name);
          choice.criterion = colon == std::string_view::npos
                                 ? spec.criterion
                                 : parse_criterion(trim(item.substr(colon + 1)));
        } catch (const Error& e) {
          invalid(v->line, e.what());
        }
        for (const MetricChoice& m : metrics) {
          if (m.name == choice.name) invalid(v->line, fmt::format("metric '{}' listed twice", m.name));
        }
        metrics.push_back(std::move(choice));
      }
    }
  }
}

void read_data(Reader& r, std::size_t section_line, DataConfig& d) {
  if (const Value* v = r.get("source")) {
    if (v->text == "synthetic") {
      d.source = DataSource::Synthetic;
    } else if (v->text == "folder") {
      d.source = DataSource::Folder;
    } else {
      invalid(v->line, fmt::format("source must be 'synthetic' or 'folder', got '{}'", v->text));
    }
  }
  if (const Value* v = r.get("path")) d.path = v->text;
  if (d.source == DataSource::Folder && d.path.empty()) {
    invalid(section_line, "[data] source = folder requires 'path'");
  }
  if (const Value* v = r.get("task")) {
    try {
      d.task = parse_task_kind(v->text);
    } catch (const Error& e) {
      invalid(v->line, e.what());
    }
  }
  if (const Value* v = r.get("count")) {
    d.count = parse_count(v->text, v->line, "count");
    if (d.count < 4) invalid(v->line, "count must be at least 4");
  }
  if (const Value* v = r.get("size")) {
    d.size = parse_count(v->text, v->line, "size");
    if (d.size < 8) invalid(v->line, "size must be at least 8");
  }
  if (const Value* v = r.get("channels")) {
    d.channels = parse_count(v->text, v->line, "channels");
    if (d.channels == 0) invalid(v->line, "channels must be at least 1");
  }
  if (const Value* v = r.get("seed")) d.seed = parse_number<std::uint64_t>(v->text, v->line, "seed");
  if (const Value* v = r.get("folds")) {
    d.folds = parse_count(v->text, v->line, "folds");
    if (d.folds == 0) invalid(v->line, "folds must be at least 1");
  }
  if (const Value* v = r.get("val_fraction")) {
    d.val_fraction = parse_number<double>(v->text, v->line, "val_fraction");
    if (!(d.val_fraction >= 0.0 && d.val_fraction < 1.0)) {
      invalid(v->line, "val_fraction must lie in [0, 1)");
    }
  }
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  std::map<std::string, Section, std::less<>> sections;
  std::map<std::string, std::size_t, std::less<>> section_lines;
  std::string current;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') malformed(line_no, "unterminated section header");
      current = std::string(trim(line.substr(1, line.size() - 2)));
      if (current != "network" && current != "trainer" && current != "data") {
        malformed(line_no, fmt::format("unknown section [{}]", current));
      }
      if (section_lines.contains(current)) malformed(line_no, fmt::format("section [{}] repeated", current));
      section_lines[current] = line_no;
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) malformed(line_no, "expected 'key = value'");
    if (current.empty()) malformed(line_no, "key outside of a section");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) malformed(line_no, "missing key before '='");
    Section& section = sections[current];
    if (section.contains(key)) {
      malformed(line_no, fmt::format("key '{}' repeated (first on line {})", key, section[key].line));
    }
    section[key] = Value{std::string(trim(line.substr(eq + 1))), line_no};
  }
  if (!sections.contains("network")) {
    fail(ErrorCode::ValidationError, fmt::format("line {}: missing [network] section", line_no));
  }

  RunConfig config;
  Reader network(sections["network"], "network",
                 {"in_channels", "tier_sizes", "kernel_sizes", "sampling_factors", "operators",
                  "k_sin", "k_chirp", "cut", "init", "init_bound"});
  read_network(network, section_lines["network"], config.network);
  if (sections.contains("trainer")) {
    Reader trainer(sections["trainer"], "trainer",
                   {"loss", "optimizer", "lr", "momentum", "beta1", "beta2", "eps", "lr_decay",
                    "num_epochs", "num_runs", "batch_size", "seed", "model_name", "device",
                    "metrics"});
    read_trainer(trainer, config.trainer, config.metrics);
  }
  if (sections.contains("data")) {
    Reader data(sections["data"], "data",
                {"source", "path", "task", "count", "size", "channels", "seed", "folds",
                 "val_fraction"});
    read_data(data, section_lines["data"], config.data);
  }
  config.trainer.init = config.network.init;
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

namespace {

std::string number(double v) { return fmt::format("{:.17g}", v); }

template <typename T>
std::string join(const std::vector<T>& items, std::string_view sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += fmt::format("{}", items[i]);
  }
  return out;
}

}  // namespace

std::string print_config(const RunConfig& c) {
  const NetworkConfig& n = c.network;
  std::vector<std::string> ops;
  for (const auto& tier : n.operators) ops.push_back(join(tier));
  std::vector<std::string> metrics;
  for (const MetricChoice& m : c.metrics) metrics.push_back(fmt::format("{}:{}", m.name, to_string(m.criterion)));
  const TrainerConfig& t = c.trainer;
  const DataConfig& d = c.data;

  std::string out;
  out += "[network]\n";
  out += fmt::format("in_channels = {}\n", n.in_channels);
  out += fmt::format("tier_sizes = {}\n", join(n.tier_sizes));
  out += fmt::format("kernel_sizes = {}\n", join(n.kernel_sizes));
  out += fmt::format("sampling_factors = {}\n", join(n.sampling_factors));
  out += fmt::format("operators = {}\n", join(ops, "; "));
  out += fmt::format("k_sin = {}\n", number(n.constants.k_sin));
  out += fmt::format("k_chirp = {}\n", number(n.constants.k_chirp));
  out += fmt::format("cut = {}\n", number(n.constants.cut));
  out += fmt::format("init = {}\n", n.init.kind == InitKind::Uniform ? "uniform" : "fan_in");
  out += fmt::format("init_bound = {}\n", number(n.init.bound));
  out += "\n[trainer]\n";
  out += fmt::format("loss = {}\n", t.loss);
  out += fmt::format("optimizer = {}\n", t.optimizer.name);
  out += fmt::format("lr = {}\n", number(t.optimizer.lr));
  out += fmt::format("momentum = {}\n", number(t.optimizer.momentum));
  out += fmt::format("beta1 = {}\n", number(t.optimizer.beta1));
  out += fmt::format("beta2 = {}\n", number(t.optimizer.beta2));
  out += fmt::format("eps = {}\n", number(t.optimizer.eps));
  out += fmt::format("lr_decay = {}\n", number(t.optimizer.lr_decay));
  out += fmt::format("num_epochs = {}\n", t.num_epochs);
  out += fmt::format("num_runs = {}\n", t.num_runs);
  out += fmt::format("batch_size = {}\n", t.batch_size);
  out += fmt::format("seed = {}\n", t.seed);
  out += fmt::format("model_name = {}\n", t.model_name);
  out += fmt::format("device = {}\n", t.device);
  out += fmt::format("metrics = {}\n", join(metrics));
  out += "\n[data]\n";
  out += fmt::format("source = {}\n", d.source == DataSource::Synthetic ? "synthetic" : "folder");
  if (!d.path.empty()) out += fmt::format("path = {}\n", d.path);
  out += fmt::format("task = {}\n", to_string(d.task));
  out += fmt::format("count = {}\n", d.count);
  out += fmt::format("size = {}\n", d.size);
  out += fmt::format("channels = {}\n", d.channels);
  out += fmt::format("seed = {}\n", d.seed);
  out += fmt::format("folds = {}\n", d.folds);
  out += fmt::format("val_fraction = {}\n", number(d.val_fraction));
  return out;
}

}  // namespace onnkit
