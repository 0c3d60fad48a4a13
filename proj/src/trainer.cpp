#include "onnkit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "onnkit/autograd.hpp"
#include "onnkit/error.hpp"

namespace onnkit {

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "train";
}

std::vector<const EpochRow*> TrainingRecord::rows_for(Partition p) const {
  std::vector<const EpochRow*> out;
  for (const EpochRow& row : rows) {
    if (row.partition == p) out.push_back(&row);
  }
  return out;
}

const BestState* TrainingRecord::best(std::string_view metric, Partition p) const {
  for (const BestState& b : bests) {
    if (b.metric == metric && b.partition == p) return &b;
  }
  return nullptr;
}

bool TrainingRecord::has_partition(Partition p) const {
  return std::any_of(rows.begin(), rows.end(),
                     [p](const EpochRow& r) { return r.partition == p; });
}

std::uint64_t run_seed(std::uint64_t master, std::size_t run) { return master ^ run; }

namespace {

void check_loss_name(std::string_view loss) {
  if (loss != "mse" && loss != "mae") {
    fail(ErrorCode::ValidationError, fmt::format("unknown loss '{}' (mse, mae)", loss));
  }
}

const PairedImageDataset& partition_data(const DataSplit& data, Partition p) {
  switch (p) {
    case Partition::Train: return data.train;
    case Partition::Val: return data.val;
    case Partition::Test: return data.test;
  }
  return data.train;
}

ag::Variable sample_loss(std::string_view loss, const ag::Variable& diff) {
  if (loss == "mae") {
    return ag::sum_all(ag::pointwise(
        "abs", diff, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }));
  }
  return ag::sum_all(ag::square(diff));
}

std::vector<Tensor> snapshot(const OpNetwork& net) {
  std::vector<Tensor> out;
  for (const Tensor* p : net.parameters()) out.push_back(*p);
  return out;
}

}  // namespace

EvalResult evaluate(const OpNetwork& net, const PairedImageDataset& data,
                    std::string_view loss, std::span<const MetricSpec> metrics) {
  check_loss_name(loss);
  if (data.empty()) fail(ErrorCode::EmptyAxis, "cannot evaluate an empty partition");
  std::vector<Tensor> preds;
  std::vector<Tensor> targets;
  preds.reserve(data.size());
  targets.reserve(data.size());
  for (const ImagePair& pair : data.items) {
    if (pair.input.rank() != 3 || pair.input.extent(0) != net.in_channels()) {
      fail(ErrorCode::SizeMismatch,
           fmt::format("network expects {} input channels, sample '{}' has shape {}",
                       net.in_channels(), pair.id, shape_str(pair.input.shape())));
    }
    Tensor pred = net.predict_one(pair.input);
    if (pred.shape() != pair.target.shape()) {
      fail(ErrorCode::SizeMismatch,
           fmt::format("network output {} does not match target {} of sample '{}'",
                       shape_str(pred.shape()), shape_str(pair.target.shape()), pair.id));
    }
    preds.push_back(std::move(pred));
    targets.push_back(pair.target);
  }
  const Tensor all_pred = stack(preds);
  const Tensor all_target = stack(targets);
  EvalResult result;
  result.loss = loss == "mae" ? mean_absolute_error(all_pred, all_target)
                              : mean_squared_error(all_pred, all_target);
  for (const MetricSpec& m : metrics) result.metrics.push_back(m.compute(all_pred, all_target));
  return result;
}

Trainer::Trainer(OpNetwork net, DataSplit data, TrainerConfig config,
                 std::vector<MetricSpec> metrics)
    : net_(std::move(net)),
      data_(std::move(data)),
      config_(std::move(config)),
      metrics_(std::move(metrics)),
      optimizer_(config_.optimizer) {
  if (config_.num_epochs == 0) fail(ErrorCode::ValidationError, "num_epochs must be >= 1");
  if (config_.num_runs == 0) fail(ErrorCode::ValidationError, "num_runs must be >= 1");
  if (config_.batch_size == 0) fail(ErrorCode::ValidationError, "batch_size must be >= 1");
  check_loss_name(config_.loss);
  if (data_.train.empty()) fail(ErrorCode::TooFewSamples, "training partition is empty");
  for (std::size_t i = 0; i < metrics_.size(); ++i) {
    const std::string& name = metrics_[i].name;
    if (name.empty() || name == "loss" ||
        name.find_first_of("/\n,\"") != std::string::npos) {
      fail(ErrorCode::ValidationError, fmt::format("invalid metric name '{}'", name));
    }
    if (!metrics_[i].compute) {
      fail(ErrorCode::ValidationError, fmt::format("metric '{}' has no function", name));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (metrics_[j].name == name) {
        fail(ErrorCode::DuplicateName, fmt::format("metric '{}' given twice", name));
      }
    }
    record_.metric_names.push_back(name);
    record_.criteria.push_back(metrics_[i].criterion);
  }
  for (Partition p : kPartitions) {
    if (partition_data(data_, p).empty()) continue;
    record_.bests.push_back({"loss", p, Criterion::Min, false, 0, 0, 0.0, {}});
    for (const MetricSpec& m : metrics_) {
      record_.bests.push_back({m.name, p, m.criterion, false, 0, 0, 0.0, {}});
    }
  }
  record_.runs.resize(config_.num_runs);
}

void Trainer::start_run() {
  const std::uint64_t seed = run_seed(config_.seed, run_);
  net_.reset_parameters(seed, config_.init);
  optimizer_ = Optimizer(config_.optimizer);
  rng_ = Rng(mix_seed(seed, 0x5348554646ULL));
  run_started_ = true;
}

void Trainer::run_epoch() {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  const PairedImageDataset& train = data_.train;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(order);

  for (std::size_t lo = 0; lo < order.size(); lo += config_.batch_size) {
    const std::size_t hi = std::min(order.size(), lo + config_.batch_size);
    ag::Tape tape;
    const std::vector<ag::Variable> params = net_.bind(tape);
    std::optional<ag::Variable> total;
    std::size_t elements = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      const ImagePair& pair = train[order[k]];
      const ag::Variable y = net_.forward(params, tape.constant(pair.input));
      if (y.shape() != pair.target.shape()) {
        fail(ErrorCode::SizeMismatch,
             fmt::format("network output {} does not match target {} of sample '{}'",
                         shape_str(y.shape()), shape_str(pair.target.shape()), pair.id));
      }
      const ag::Variable term = sample_loss(config_.loss, y - tape.constant(pair.target));
      total = total ? *total + term : term;
      elements += pair.target.numel();
    }
    const ag::Variable loss = ag::scale(*total, 1.0 / static_cast<double>(elements));
    if (!std::isfinite(loss.value().item())) {
      fail(ErrorCode::NonFiniteLoss,
           fmt::format("run {} epoch {}: training loss is {}", run_, epoch_,
                       loss.value().item()));
    }
    const ag::GradientMap grads = tape.backward(loss);
    std::vector<Tensor> g;
    g.reserve(params.size());
    for (const ag::Variable& p : params) g.push_back(grads.of(p));
    const std::vector<Tensor*> targets = net_.parameters();
    optimizer_.step(targets, g);
  }
  optimizer_.decay_lr();

  std::vector<std::pair<Partition, EvalResult>> evals;
  for (Partition p : kPartitions) {
    const PairedImageDataset& part = partition_data(data_, p);
    if (part.empty()) continue;
    EvalResult r = evaluate(net_, part, config_.loss, metrics_);
    if (!std::isfinite(r.loss)) {
      fail(ErrorCode::NonFiniteLoss,
           fmt::format("run {} epoch {}: {} loss is {}", run_, epoch_, to_string(p), r.loss));
    }
    evals.emplace_back(p, std::move(r));
  }

  for (BestState& b : record_.bests) {
    for (const auto& [p, r] : evals) {
      if (p != b.partition) continue;
      double value = r.loss;
      if (b.metric != "loss") {
        const auto it = std::find(record_.metric_names.begin(), record_.metric_names.end(),
                                  b.metric);
        value = r.metrics[static_cast<std::size_t>(it - record_.metric_names.begin())];
      }
      if (!b.valid || improves(b.criterion, value, b.value)) {
        b.valid = true;
        b.run = run_;
        b.epoch = epoch_;
        b.value = value;
        b.parameters = snapshot(net_);
      }
    }
  }

  const std::chrono::duration<double> elapsed = Clock::now() - start;
  const double per_image = elapsed.count() / static_cast<double>(train.size());
  for (auto& [p, r] : evals) {
    record_.rows.push_back({run_, epoch_, p, r.loss, std::move(r.metrics), per_image});
  }
}

void Trainer::abort_run(const std::string& message) {
  record_.runs[run_].aborted = true;
  record_.runs[run_].message = message;
  ++run_;
  epoch_ = 0;
  run_started_ = false;
}

bool Trainer::advance(std::size_t epochs) {
  while (epochs > 0 && !finished()) {
    --epochs;
    try {
      if (!run_started_) start_run();
      run_epoch();
    } catch (const Error& e) {
      const ErrorCode c = e.code();
      if (c != ErrorCode::NonFiniteLoss && c != ErrorCode::NonFiniteGradient &&
          c != ErrorCode::NonFiniteValue) {
        throw;
      }
      abort_run(e.what());
      continue;
    }
    ++epoch_;
    record_.runs[run_].completed_epochs = epoch_;
    if (epoch_ == config_.num_epochs) {
      ++run_;
      epoch_ = 0;
      run_started_ = false;
    }
  }
  return finished();
}

const TrainingRecord& Trainer::train() {
  while (!finished()) advance(config_.num_epochs);
  return record_;
}

// Checkpoint layout.

void write_architecture(Archive& archive, const OpNetwork& net) {
  archive.put_u64("arch/in_channels", {net.in_channels()});
  archive.put_u64("arch/tiers", {net.tiers().size()});
  for (std::size_t t = 0; t < net.tiers().size(); ++t) {
    const OpTier& tier = net.tiers()[t];
    archive.put_u64(fmt::format("arch/tier/{}", t),
                    {tier.blocks.size(), tier.kernel,
                     static_cast<std::uint64_t>(static_cast<std::int64_t>(tier.sampling))});
    std::vector<std::uint64_t> ops;
    for (const OpBlock& b : tier.blocks) ops.push_back(b.operator_set);
    archive.put_u64(fmt::format("arch/tier/{}/operators", t), std::move(ops));
  }
  const OplibConstants& k = net.library().constants();
  archive.put("arch/oplib", Tensor({3}, {k.k_sin, k.k_chirp, k.cut}));
  archive.put_u64("arch/oplib_size", {net.library().size()});
}

OpNetwork read_architecture(const Archive& archive,
                            std::shared_ptr<const OperatorSetLibrary> library) {
  NetworkSpec spec;
  spec.in_channels = archive.u64_scalar("arch/in_channels");
  const std::uint64_t tiers = archive.u64_scalar("arch/tiers");
  if (tiers > 4096) fail(ErrorCode::CorruptState, "implausible tier count");
  for (std::uint64_t t = 0; t < tiers; ++t) {
    const auto v = archive.u64(fmt::format("arch/tier/{}", t));
    if (v.size() != 3) fail(ErrorCode::CorruptState, fmt::format("tier {} entry malformed", t));
    TierSpec ts;
    ts.neurons = v[0];
    ts.kernel = v[1];
    ts.sampling = static_cast<int>(static_cast<std::int64_t>(v[2]));
    const auto ops = archive.u64(fmt::format("arch/tier/{}/operators", t));
    ts.operators.assign(ops.begin(), ops.end());
    spec.tiers.push_back(std::move(ts));
  }
  if (!library) {
    const Tensor k = archive.tensor("arch/oplib");
    if (k.numel() != 3) fail(ErrorCode::CorruptState, "operator constants malformed");
    library = std::make_shared<const OperatorSetLibrary>(
        OperatorSetLibrary::builtin({k[0], k[1], k[2]}));
  }
  try {
    return OpNetwork(spec, std::move(library));
  } catch (const Error& e) {
    fail(ErrorCode::CorruptState, fmt::format("stored architecture is invalid: {}", e.what()));
  }
}

namespace {

void write_parameters(Archive& archive, const std::string& prefix,
                      const std::vector<std::string>& names,
                      const std::vector<const Tensor*>& values) {
  for (std::size_t i = 0; i < names.size(); ++i) archive.put(prefix + names[i], *values[i]);
}

std::vector<Tensor> read_parameters(const Archive& archive, const std::string& prefix,
                                    const OpNetwork& net) {
  const auto names = net.parameter_names();
  const auto current = net.parameters();
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = archive.tensor(prefix + names[i]);
    if (t.shape() != current[i]->shape()) {
      fail(ErrorCode::CorruptState,
           fmt::format("{}{} has shape {}, architecture expects {}", prefix, names[i],
                       shape_str(t.shape()), shape_str(current[i]->shape())));
    }
    out.push_back(std::move(t));
  }
  return out;
}

void assign_parameters(OpNetwork& net, std::vector<Tensor> values) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(values[i]);
}

void write_config(Archive& archive, const TrainerConfig& c) {
  archive.put_bytes("cfg/loss", c.loss);
  archive.put_bytes("cfg/model_name", c.model_name);
  archive.put_bytes("cfg/device", c.device);
  archive.put_bytes("cfg/optimizer", c.optimizer.name);
  const OptimizerConfig& o = c.optimizer;
  archive.put("cfg/optimizer_hyper",
              Tensor({6}, {o.lr, o.momentum, o.beta1, o.beta2, o.eps, o.lr_decay}));
  archive.put_u64("cfg/counts", {c.num_epochs, c.num_runs, c.batch_size, c.seed,
                                 static_cast<std::uint64_t>(c.init.kind)});
  archive.put("cfg/init_bound", Tensor({1}, {c.init.bound}));
}

TrainerConfig read_config(const Archive& archive) {
  TrainerConfig c;
  c.loss = archive.bytes("cfg/loss");
  c.model_name = archive.bytes("cfg/model_name");
  c.device = archive.bytes("cfg/device");
  c.optimizer.name = archive.bytes("cfg/optimizer");
  const Tensor h = archive.tensor("cfg/optimizer_hyper");
  if (h.numel() != 6) fail(ErrorCode::CorruptState, "optimizer settings malformed");
  c.optimizer.lr = h[0];
  c.optimizer.momentum = h[1];
  c.optimizer.beta1 = h[2];
  c.optimizer.beta2 = h[3];
  c.optimizer.eps = h[4];
  c.optimizer.lr_decay = h[5];
  const auto n = archive.u64("cfg/counts");
  if (n.size() != 5 || n[4] > 1) fail(ErrorCode::CorruptState, "trainer settings malformed");
  c.num_epochs = n[0];
  c.num_runs = n[1];
  c.batch_size = n[2];
  c.seed = n[3];
  c.init.kind = static_cast<InitKind>(n[4]);
  c.init.bound = archive.tensor("cfg/init_bound").item();
  return c;
}

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const std::string& s : items) {
    if (!out.empty()) out += '\n';
    out += s;
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find('\n', start);
    out.push_back(text.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

Tensor series(const std::vector<const EpochRow*>& rows, const std::function<double(const EpochRow&)>& pick) {
  Tensor t({rows.size(), 3});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.at({i, 0}) = static_cast<double>(rows[i]->run);
    t.at({i, 1}) = static_cast<double>(rows[i]->epoch);
    t.at({i, 2}) = pick(*rows[i]);
  }
  return t;
}

void write_record(Archive& archive, const TrainingRecord& record, const OpNetwork& net) {
  archive.put_bytes("stats/metrics", join_lines(record.metric_names));
  std::vector<std::uint64_t> criteria;
  for (Criterion c : record.criteria) criteria.push_back(c == Criterion::Max ? 0 : 1);
  archive.put_u64("stats/criteria", std::move(criteria));
  std::vector<std::uint64_t> present;
  for (Partition p : kPartitions) {
    const auto rows = record.rows_for(p);
    present.push_back(rows.empty() ? 0 : 1);
    if (rows.empty()) continue;
    const std::string base = fmt::format("stats/{}/", to_string(p));
    archive.put(base + "loss", series(rows, [](const EpochRow& r) { return r.loss; }));
    for (std::size_t m = 0; m < record.metric_names.size(); ++m) {
      archive.put(base + record.metric_names[m],
                  series(rows, [m](const EpochRow& r) { return r.metrics.at(m); }));
    }
    archive.put(base + "per_image_time_s",
                series(rows, [](const EpochRow& r) { return r.per_image_time_s; }));
  }
  archive.put_u64("stats/partitions", std::move(present));

  std::vector<std::uint64_t> status;
  for (std::size_t r = 0; r < record.runs.size(); ++r) {
    status.push_back(record.runs[r].completed_epochs);
    status.push_back(record.runs[r].aborted ? 1 : 0);
    if (record.runs[r].aborted) {
      archive.put_bytes(fmt::format("runs/{}/message", r), record.runs[r].message);
    }
  }
  archive.put_u64("runs/status", std::move(status));

  std::vector<std::string> keys;
  const auto names = net.parameter_names();
  for (const BestState& b : record.bests) {
    const std::string base = fmt::format("best/{}/{}", b.metric, to_string(b.partition));
    keys.push_back(fmt::format("{}/{}/{}", b.metric, to_string(b.partition),
                               b.criterion == Criterion::Max ? "max" : "min"));
    archive.put(base, Tensor({4}, {b.valid ? 1.0 : 0.0, static_cast<double>(b.run),
                                   static_cast<double>(b.epoch), b.value}));
    if (!b.valid) continue;
    for (std::size_t i = 0; i < names.size(); ++i) {
      archive.put(base + "/" + names[i], b.parameters[i]);
    }
  }
  archive.put_bytes("best/index", join_lines(keys));
}

Partition parse_partition(std::string_view s) {
  for (Partition p : kPartitions) {
    if (to_string(p) == s) return p;
  }
  fail(ErrorCode::CorruptState, fmt::format("unknown partition '{}'", s));
}

TrainingRecord read_record(const Archive& archive, const OpNetwork& net) {
  TrainingRecord record;
  record.metric_names = split_lines(archive.bytes("stats/metrics"));
  const auto criteria = archive.u64("stats/criteria");
  if (criteria.size() != record.metric_names.size()) {
    fail(ErrorCode::CorruptState, "metric criteria do not match metric names");
  }
  for (auto c : criteria) record.criteria.push_back(c == 0 ? Criterion::Max : Criterion::Min);
  const auto present = archive.u64("stats/partitions");
  if (present.size() != kPartitions.size()) fail(ErrorCode::CorruptState, "partition flags malformed");

  for (std::size_t pi = 0; pi < kPartitions.size(); ++pi) {
    if (present[pi] == 0) continue;
    const Partition p = kPartitions[pi];
    const std::string base = fmt::format("stats/{}/", to_string(p));
    const Tensor loss = archive.tensor(base + "loss");
    const Tensor time = archive.tensor(base + "per_image_time_s");
    std::vector<Tensor> metric_series;
    for (const std::string& m : record.metric_names) metric_series.push_back(archive.tensor(base + m));
    const std::size_t rows = loss.rank() == 2 ? loss.extent(0) : 0;
    auto check = [&](const Tensor& t, const std::string& what) {
      if (t.shape() != Shape{rows, 3}) {
        fail(ErrorCode::CorruptState, fmt::format("{}{} has shape {}", base, what, shape_str(t.shape())));
      }
    };
    check(loss, "loss");
    check(time, "per_image_time_s");
    for (std::size_t m = 0; m < metric_series.size(); ++m) check(metric_series[m], record.metric_names[m]);
    for (std::size_t i = 0; i < rows; ++i) {
      EpochRow row;
      row.run = static_cast<std::size_t>(loss.at({i, 0}));
      row.epoch = static_cast<std::size_t>(loss.at({i, 1}));
      row.partition = p;
      row.loss = loss.at({i, 2});
      for (const Tensor& s : metric_series) row.metrics.push_back(s.at({i, 2}));
      row.per_image_time_s = time.at({i, 2});
      record.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(record.rows.begin(), record.rows.end(), [](const EpochRow& a, const EpochRow& b) {
    return std::tuple(a.run, a.epoch, a.partition) < std::tuple(b.run, b.epoch, b.partition);
  });

  const auto status = archive.u64("runs/status");
  if (status.size() % 2 != 0) fail(ErrorCode::CorruptState, "run status malformed");
  for (std::size_t r = 0; r < status.size() / 2; ++r) {
    RunStatus s;
    s.completed_epochs = status[2 * r];
    s.aborted = status[2 * r + 1] != 0;
    if (s.aborted) s.message = archive.bytes(fmt::format("runs/{}/message", r));
    record.runs.push_back(std::move(s));
  }

  for (const std::string& key : split_lines(archive.bytes("best/index"))) {
    const auto a = key.find('/');
    const auto b = key.rfind('/');
    if (a == std::string::npos || a == b) fail(ErrorCode::CorruptState, "best-state index malformed");
    BestState best;
    best.metric = key.substr(0, a);
    best.partition = parse_partition(key.substr(a + 1, b - a - 1));
    best.criterion = key.substr(b + 1) == "max" ? Criterion::Max : Criterion::Min;
    const std::string base = fmt::format("best/{}/{}", best.metric, to_string(best.partition));
    const Tensor head = archive.tensor(base);
    if (head.numel() != 4) fail(ErrorCode::CorruptState, fmt::format("{} malformed", base));
    best.valid = head[0] != 0.0;
    best.run = static_cast<std::size_t>(head[1]);
    best.epoch = static_cast<std::size_t>(head[2]);
    best.value = head[3];
    if (best.valid) best.parameters = read_parameters(archive, base + "/", net);
    record.bests.push_back(std::move(best));
  }
  return record;
}

}  // namespace

Archive Trainer::to_archive() const {
  Archive archive;
  write_architecture(archive, net_);
  write_parameters(archive, "", net_.parameter_names(), net_.parameters());
  optimizer_.write(archive, "opt/");
  archive.put_bytes("rng/state", rng_.save_state());
  write_config(archive, config_);
  archive.put_bytes("cfg/echo", config_echo_);
  archive.put_u64("progress", {run_, epoch_, run_started_ ? 1u : 0u});
  archive.put_u64("data/train_ids", {data_.train_ids.begin(), data_.train_ids.end()});
  archive.put_u64("data/val_ids", {data_.val_ids.begin(), data_.val_ids.end()});
  archive.put_u64("data/test_ids", {data_.test_ids.begin(), data_.test_ids.end()});
  write_record(archive, record_, net_);
  return archive;
}

void Trainer::save_all(const std::filesystem::path& path) const { to_archive().save(path); }

Trainer Trainer::from_archive(const Archive& archive, DataSplit data,
                              std::vector<MetricSpec> metrics,
                              std::shared_ptr<const OperatorSetLibrary> library) {
  OpNetwork net = read_architecture(archive, std::move(library));
  assign_parameters(net, read_parameters(archive, "", net));
  TrainerConfig config = read_config(archive);
  TrainingRecord record = read_record(archive, net);

  std::vector<MetricSpec> resolved;
  for (std::size_t i = 0; i < record.metric_names.size(); ++i) {
    const std::string& name = record.metric_names[i];
    const auto it = std::find_if(metrics.begin(), metrics.end(),
                                 [&](const MetricSpec& m) { return m.name == name; });
    MetricSpec spec = it != metrics.end() ? *it : builtin_metric(name);
    spec.criterion = record.criteria[i];
    resolved.push_back(std::move(spec));
  }

  Trainer trainer(std::move(net), std::move(data), config, std::move(resolved));
  if (record.runs.size() != config.num_runs) fail(ErrorCode::CorruptState, "run count mismatch");
  trainer.record_ = std::move(record);
  trainer.optimizer_ = Optimizer::read(archive, "opt/");
  trainer.rng_.load_state(archive.bytes("rng/state"));
  trainer.config_echo_ = archive.bytes("cfg/echo");
  const auto progress = archive.u64("progress");
  if (progress.size() != 3 || progress[0] > config.num_runs || progress[1] >= config.num_epochs) {
    fail(ErrorCode::CorruptState, "training progress malformed");
  }
  trainer.run_ = progress[0];
  trainer.epoch_ = progress[1];
  trainer.run_started_ = progress[2] != 0;
  return trainer;
}

Trainer Trainer::load(const std::filesystem::path& path, DataSplit data,
                      std::vector<MetricSpec> metrics,
                      std::shared_ptr<const OperatorSetLibrary> library) {
  return from_archive(Archive::load(path), std::move(data), std::move(metrics),
                      std::move(library));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::shared_ptr<const OperatorSetLibrary> library) {
  const Archive archive = Archive::load(path);
  OpNetwork net = read_architecture(archive, std::move(library));
  assign_parameters(net, read_parameters(archive, "", net));
  TrainingRecord record = read_record(archive, net);
  LoadedCheckpoint out{std::move(net), Optimizer::read(archive, "opt/"), read_config(archive),
                       std::move(record), archive.bytes("cfg/echo"), {}};
  const char* keys[] = {"data/train_ids", "data/val_ids", "data/test_ids"};
  for (std::size_t p = 0; p < 3; ++p) {
    const auto ids = archive.u64(keys[p]);
    out.split_ids[p].assign(ids.begin(), ids.end());
  }
  return out;
}

}  // namespace onnkit
