#include <algorithm>
#include <functional>
#include <fstream>
#include <optional>

#include <fmt/format.h>

#include "onnkit/error.hpp"
#include "onnkit/trainer.hpp"

namespace onnkit {

namespace {

std::string csv_number(double v) { return fmt::format("{:.17g}", v); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += ',';
    out += cells[i];
  }
  out += "\r\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
}

double mean_time(const TrainingRecord& record) {
  const auto rows = record.rows_for(Partition::Train);
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (const EpochRow* r : rows) acc += r->per_image_time_s;
  return acc / static_cast<double>(rows.size());
}

std::optional<double> train_loss_at(const TrainingRecord& record, bool last) {
  std::optional<double> value;
  for (const EpochRow* r : record.rows_for(Partition::Train)) {
    if (r->run != 0) continue;
    if (!last) return r->loss;
    value = r->loss;
  }
  return value;
}

}  // namespace

void export_stats(const TrainingRecord& record, const std::filesystem::path& dir,
                  std::string_view prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  for (Partition p : kPartitions) {
    const auto rows = record.rows_for(p);
    if (rows.empty()) continue;
    std::string text;
    std::vector<std::string> header{"run", "epoch", "loss"};
    for (const std::string& m : record.metric_names) header.push_back(csv_field(m));
    header.emplace_back("per_image_time_s");
    append_row(text, header);
    for (const EpochRow* r : rows) {
      std::vector<std::string> cells{std::to_string(r->run), std::to_string(r->epoch),
                                     csv_number(r->loss)};
      for (double v : r->metrics) cells.push_back(csv_number(v));
      cells.push_back(csv_number(r->per_image_time_s));
      append_row(text, cells);
    }
    write_text(dir / fmt::format("{}{}.csv", prefix, to_string(p)), text);
  }
}

std::string summary_csv(std::span<const TrainingRecord> folds) {
  if (folds.empty()) fail(ErrorCode::EmptyAxis, "no folds to summarise");
  std::string text;
  std::vector<std::string> header{"metric", "partition"};
  for (std::size_t f = 0; f < folds.size(); ++f) header.push_back(fmt::format("fold_{}", f + 1));
  header.emplace_back("mean");
  header.emplace_back("per_image_time_s");
  append_row(text, header);

  double time = 0.0;
  for (const TrainingRecord& r : folds) time += mean_time(r);
  const std::string time_cell = csv_number(time / static_cast<double>(folds.size()));

  auto emit = [&](const std::string& metric, Partition p,
                  const std::function<std::optional<double>(const TrainingRecord&)>& pick) {
    std::vector<std::string> cells{csv_field(metric), std::string(to_string(p))};
    double acc = 0.0;
    std::size_t n = 0;
    for (const TrainingRecord& r : folds) {
      const auto v = pick(r);
      cells.push_back(v ? csv_number(*v) : "");
      if (v) {
        acc += *v;
        ++n;
      }
    }
    cells.push_back(n > 0 ? csv_number(acc / static_cast<double>(n)) : "");
    cells.push_back(time_cell);
    append_row(text, cells);
  };

  std::vector<std::string> metrics{"loss"};
  for (const std::string& m : folds.front().metric_names) metrics.push_back(m);
  for (Partition p : kPartitions) {
    const bool present = std::any_of(folds.begin(), folds.end(),
                                     [p](const TrainingRecord& r) { return r.has_partition(p); });
    if (!present) continue;
    for (const std::string& m : metrics) {
      emit(m, p, [&](const TrainingRecord& r) -> std::optional<double> {
        const BestState* b = r.best(m, p);
        if (b == nullptr || !b->valid) return std::nullopt;
        return b->value;
      });
    }
  }
  emit("loss@first_epoch", Partition::Train,
       [](const TrainingRecord& r) { return train_loss_at(r, false); });
  emit("loss@last_epoch", Partition::Train,
       [](const TrainingRecord& r) { return train_loss_at(r, true); });
  return text;
}

void export_summary(std::span<const TrainingRecord> folds, const std::filesystem::path& path) {
  write_text(path, summary_csv(folds));
}

}  // namespace onnkit
