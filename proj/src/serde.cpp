#include "encdecad/serde.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "encdecad/errors.hpp"

namespace encdecad::serde {
namespace {

using numerics::Index;
using numerics::Matrix;
using numerics::Vector;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw ArtifactError(path.string() + ": " + what);
}

json params_payload(const lstm::LstmParams& p) {
  json out;
  for (int g = 0; g < 4; ++g) {
    out["w_in"][lstm::kGateNames[g]] = matrix_to_json(p.w_in[static_cast<std::size_t>(g)]);
    out["w_rec"][lstm::kGateNames[g]] = matrix_to_json(p.w_rec[static_cast<std::size_t>(g)]);
    out["bias"][lstm::kGateNames[g]] = vector_to_json(p.bias[static_cast<std::size_t>(g)]);
  }
  return out;
}

lstm::LstmParams params_from_payload(const json& j, Index input_dim, Index hidden) {
  lstm::LstmParams p;
  for (int g = 0; g < 4; ++g) {
    const char* name = lstm::kGateNames[g];
    p.w_in[static_cast<std::size_t>(g)] = matrix_from_json(j.at("w_in").at(name), hidden, input_dim);
    p.w_rec[static_cast<std::size_t>(g)] = matrix_from_json(j.at("w_rec").at(name), hidden, hidden);
    p.bias[static_cast<std::size_t>(g)] = vector_from_json(j.at("bias").at(name), hidden);
  }
  return p;
}

template <typename F>
auto rethrow_as_artifact(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ArtifactError(path.string() + ": " + e.what());
  } catch (const Error&) {
    throw;
  }
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string config_hash(const json& config) { return fnv1a_hex(config.dump()); }

json number_to_json(double value) {
  if (std::isfinite(value)) return value;
  if (std::isnan(value)) return "nan";
  return value > 0 ? "inf" : "-inf";
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ArtifactError("expected a number, got " + j.dump());
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows * cols)
    throw ArtifactError("parameter array has " + std::to_string(j.size()) + " entries, expected " +
                        std::to_string(rows * cols));
  Matrix m(rows, cols);
  Index k = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(k++)].get<double>();
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& j, Index size) {
  if (!j.is_array() || static_cast<Index>(j.size()) != size)
    throw ArtifactError("vector has " + std::to_string(j.size()) + " entries, expected " +
                        std::to_string(size));
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json model_payload(const lstm::EncDecModel& model) {
  json out;
  out["input_dim"] = model.input_dim;
  out["hidden_units"] = model.hidden_units;
  out["window_len"] = model.window_len;
  out["init_seed"] = model.init_seed;
  out["encoder"] = params_payload(model.encoder);
  out["decoder"] = params_payload(model.decoder);
  out["output_weight"] = matrix_to_json(model.output_weight);
  out["output_bias"] = vector_to_json(model.output_bias);
  return out;
}

lstm::EncDecModel model_from_payload(const json& j) {
  lstm::EncDecModel model;
  model.input_dim = j.at("input_dim").get<Index>();
  model.hidden_units = j.at("hidden_units").get<Index>();
  model.window_len = j.at("window_len").get<Index>();
  model.init_seed = j.at("init_seed").get<std::uint64_t>();
  model.encoder = params_from_payload(j.at("encoder"), model.input_dim, model.hidden_units);
  model.decoder = params_from_payload(j.at("decoder"), model.input_dim, model.hidden_units);
  model.output_weight = matrix_from_json(j.at("output_weight"), model.hidden_units, model.input_dim);
  model.output_bias = vector_from_json(j.at("output_bias"), model.input_dim);
  lstm::validate_shapes(model);
  return model;
}

json gradients_payload(const lstm::ModelGradients& g) {
  json out;
  out["encoder"] = params_payload(g.encoder);
  out["decoder"] = params_payload(g.decoder);
  out["output_weight"] = matrix_to_json(g.output_weight);
  out["output_bias"] = vector_to_json(g.output_bias);
  return out;
}

lstm::ModelGradients gradients_from_payload(const json& j, const lstm::EncDecModel& shape) {
  lstm::ModelGradients g;
  g.encoder = params_from_payload(j.at("encoder"), shape.input_dim, shape.hidden_units);
  g.decoder = params_from_payload(j.at("decoder"), shape.input_dim, shape.hidden_units);
  g.output_weight = matrix_from_json(j.at("output_weight"), shape.hidden_units, shape.input_dim);
  g.output_bias = vector_from_json(j.at("output_bias"), shape.input_dim);
  return g;
}

json checkpoint_payload(const training::TrainCheckpoint& ckpt) {
  json out;
  out["model"] = model_payload(ckpt.model);
  out["adam"]["first_moment"] = gradients_payload(ckpt.adam.first_moment);
  out["adam"]["second_moment"] = gradients_payload(ckpt.adam.second_moment);
  out["adam"]["step_count"] = ckpt.adam.step_count;
  out["completed_epochs"] = ckpt.completed_epochs;
  out["best_model"] = model_payload(ckpt.best_model);
  out["best_validation"] = number_to_json(ckpt.best_validation);
  out["best_epoch"] = ckpt.best_epoch;
  out["epochs_since_improvement"] = ckpt.epochs_since_improvement;
  out["shuffle_state"] = ckpt.shuffle_state;
  out["train_loss_history"] = ckpt.train_loss_history;
  out["validation_loss_history"] = ckpt.validation_loss_history;
  return out;
}

training::TrainCheckpoint checkpoint_from_payload(const json& j) {
  training::TrainCheckpoint ckpt;
  ckpt.model = model_from_payload(j.at("model"));
  ckpt.adam.first_moment = gradients_from_payload(j.at("adam").at("first_moment"), ckpt.model);
  ckpt.adam.second_moment = gradients_from_payload(j.at("adam").at("second_moment"), ckpt.model);
  ckpt.adam.step_count = j.at("adam").at("step_count").get<std::int64_t>();
  ckpt.completed_epochs = j.at("completed_epochs").get<int>();
  ckpt.best_model = model_from_payload(j.at("best_model"));
  ckpt.best_validation = number_from_json(j.at("best_validation"));
  ckpt.best_epoch = j.at("best_epoch").get<int>();
  ckpt.epochs_since_improvement = j.at("epochs_since_improvement").get<int>();
  const auto& state = j.at("shuffle_state");
  if (!state.is_array() || state.size() != 4) throw ArtifactError("shuffle_state must have 4 entries");
  for (std::size_t i = 0; i < 4; ++i) ckpt.shuffle_state[i] = state[i].get<std::uint64_t>();
  ckpt.train_loss_history = j.at("train_loss_history").get<std::vector<double>>();
  ckpt.validation_loss_history = j.at("validation_loss_history").get<std::vector<double>>();
  return ckpt;
}

json error_model_payload(const scoring::GaussianErrorModel& model) {
  json out;
  out["dim"] = model.dim();
  out["mean"] = vector_to_json(model.mean);
  out["covariance"] = matrix_to_json(model.covariance);
  out["regularization"] = model.factorization.regularization;
  out["sample_count"] = model.sample_count;
  return out;
}

scoring::GaussianErrorModel error_model_from_payload(const json& j) {
  scoring::GaussianErrorModel model;
  const Index dim = j.at("dim").get<Index>();
  model.mean = vector_from_json(j.at("mean"), dim);
  model.covariance = matrix_from_json(j.at("covariance"), dim, dim);
  model.sample_count = j.at("sample_count").get<Index>();
  // Refactoring from the recorded epsilon reproduces the original factor.
  model.factorization = numerics::factor_spd(model.covariance, j.at("regularization").get<double>());
  return model;
}

json threshold_payload(const detection::Threshold& threshold) {
  json out;
  out["tau"] = threshold.tau;
  out["method"] =
      threshold.method == detection::ThresholdMethod::kSupervised ? "supervised" : "unsupervised";
  if (threshold.beta) out["beta"] = *threshold.beta;
  if (threshold.candidate_count) out["candidate_count"] = *threshold.candidate_count;
  if (threshold.best_f_beta) out["best_f_beta"] = *threshold.best_f_beta;
  if (threshold.score_mean) out["score_mean"] = *threshold.score_mean;
  if (threshold.score_stddev) out["score_stddev"] = *threshold.score_stddev;
  return out;
}

detection::Threshold threshold_from_payload(const json& j) {
  detection::Threshold t;
  t.tau = j.at("tau").get<double>();
  const auto& method = j.at("method").get_ref<const std::string&>();
  if (method == "supervised")
    t.method = detection::ThresholdMethod::kSupervised;
  else if (method == "unsupervised")
    t.method = detection::ThresholdMethod::kUnsupervised;
  else
    throw ArtifactError("unknown threshold method '" + method + "'");
  if (j.contains("beta")) t.beta = j.at("beta").get<double>();
  if (j.contains("candidate_count")) t.candidate_count = j.at("candidate_count").get<int>();
  if (j.contains("best_f_beta")) t.best_f_beta = j.at("best_f_beta").get<double>();
  if (j.contains("score_mean")) t.score_mean = j.at("score_mean").get<double>();
  if (j.contains("score_stddev")) t.score_stddev = j.at("score_stddev").get<double>();
  return t;
}

json metrics_payload(const detection::Metrics& metrics) {
  json out;
  out["tp"] = metrics.tp;
  out["fp"] = metrics.fp;
  out["tn"] = metrics.tn;
  out["fn"] = metrics.fn;
  out["precision"] = metrics.precision;
  out["recall"] = metrics.recall;
  out["beta"] = metrics.beta;
  out["f_beta"] = metrics.f_beta_score;
  out["tpr"] = metrics.tpr;
  out["fpr"] = metrics.fpr;
  if (std::isnan(metrics.plr))
    out["plr"] = "undef";
  else if (std::isinf(metrics.plr))
    out["plr"] = "inf";
  else
    out["plr"] = metrics.plr;
  return out;
}

detection::Metrics metrics_from_payload(const json& j) {
  detection::Metrics m;
  m.tp = j.at("tp").get<std::int64_t>();
  m.fp = j.at("fp").get<std::int64_t>();
  m.tn = j.at("tn").get<std::int64_t>();
  m.fn = j.at("fn").get<std::int64_t>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.beta = j.at("beta").get<double>();
  m.f_beta_score = j.at("f_beta").get<double>();
  m.tpr = j.at("tpr").get<double>();
  m.fpr = j.at("fpr").get<double>();
  const json& plr = j.at("plr");
  if (plr.is_string())
    m.plr = plr.get_ref<const std::string&>() == "inf" ? std::numeric_limits<double>::infinity()
                                                       : std::numeric_limits<double>::quiet_NaN();
  else
    m.plr = plr.get<double>();
  return m;
}

json train_report_payload(const training::TrainReport& report) {
  json out;
  out["epochs_run"] = report.epochs_run;
  out["best_epoch"] = report.best_epoch;
  out["stop_reason"] = report.stop_reason == training::StopReason::kPatience ? "patience" : "max_epochs";
  out["train_loss"] = report.train_loss;
  out["validation_loss"] = report.validation_loss;
  return out;
}

training::TrainReport train_report_from_payload(const json& j) {
  training::TrainReport report;
  report.epochs_run = j.at("epochs_run").get<int>();
  report.best_epoch = j.at("best_epoch").get<int>();
  report.stop_reason = j.at("stop_reason").get_ref<const std::string&>() == "patience"
                           ? training::StopReason::kPatience
                           : training::StopReason::kMaxEpochs;
  report.train_loss = j.at("train_loss").get<std::vector<double>>();
  report.validation_loss = j.at("validation_loss").get<std::vector<double>>();
  return report;
}

void write_artifact(const std::filesystem::path& path, const std::string& kind, json payload,
                    const std::string& config_hash) {
  payload["format_version"] = kFormatVersion;
  payload["kind"] = kind;
  payload["config_hash"] = config_hash;
  write_text_file(path, payload.dump(2) + "\n");
}

json read_artifact(const std::filesystem::path& path, const std::string& kind,
                   std::string* config_hash_out) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version") || !doc.contains("kind"))
    fail(path, "not an artifact file (missing format_version/kind)");
  const int version = doc["format_version"].get<int>();
  if (version != kFormatVersion)
    fail(path, "format_version " + std::to_string(version) + " unsupported (this build reads " +
                   std::to_string(kFormatVersion) + ")");
  const auto file_kind = doc["kind"].get<std::string>();
  if (file_kind != kind) fail(path, "artifact kind is '" + file_kind + "', expected '" + kind + "'");
  if (config_hash_out) *config_hash_out = doc.value("config_hash", std::string{});
  return doc;
}

void save_model(const std::filesystem::path& path, const lstm::EncDecModel& model,
                const std::string& config_hash, const training::TrainReport* report) {
  json payload = model_payload(model);
  if (report) payload["training"] = train_report_payload(*report);
  write_artifact(path, "model", std::move(payload), config_hash);
}

lstm::EncDecModel load_model(const std::filesystem::path& path, std::string* config_hash_out) {
  const json doc = read_artifact(path, "model", config_hash_out);
  return rethrow_as_artifact(path, [&] { return model_from_payload(doc); });
}

void save_checkpoint(const std::filesystem::path& path, const training::TrainCheckpoint& ckpt,
                     const std::string& config_hash) {
  write_artifact(path, "checkpoint", checkpoint_payload(ckpt), config_hash);
}

training::TrainCheckpoint load_checkpoint(const std::filesystem::path& path,
                                          std::string* config_hash_out) {
  const json doc = read_artifact(path, "checkpoint", config_hash_out);
  return rethrow_as_artifact(path, [&] { return checkpoint_from_payload(doc); });
}

void save_error_model(const std::filesystem::path& path, const scoring::GaussianErrorModel& model,
                      const std::string& config_hash) {
  write_artifact(path, "error_model", error_model_payload(model), config_hash);
}

scoring::GaussianErrorModel load_error_model(const std::filesystem::path& path,
                                             std::string* config_hash_out) {
  const json doc = read_artifact(path, "error_model", config_hash_out);
  return rethrow_as_artifact(path, [&] { return error_model_from_payload(doc); });
}

void save_threshold(const std::filesystem::path& path, const detection::Threshold& threshold,
                    const std::string& config_hash) {
  write_artifact(path, "threshold", threshold_payload(threshold), config_hash);
}

detection::Threshold load_threshold(const std::filesystem::path& path, std::string* config_hash_out) {
  const json doc = read_artifact(path, "threshold", config_hash_out);
  return rethrow_as_artifact(path, [&] { return threshold_from_payload(doc); });
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::string out = "series_id,window_index,position,global_time_index,score\n";
  char buf[128];
  for (const ScoreRow& row : rows) {
    std::snprintf(buf, sizeof buf, ",%lld,%lld,%lld,%.17g\n", static_cast<long long>(row.window_index),
                  static_cast<long long>(row.position), static_cast<long long>(row.global_time_index),
                  row.score);
    out += row.series_id;
    out += buf;
  }
  write_text_file(path, out);
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open " + path.string());
  std::vector<ScoreRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("series_id,", 0) == 0) continue;
    std::istringstream cells(line);
    std::string series, w, p, g, s;
    if (!std::getline(cells, series, ',') || !std::getline(cells, w, ',') || !std::getline(cells, p, ',') ||
        !std::getline(cells, g, ',') || !std::getline(cells, s))
      fail(path, "line " + std::to_string(line_no) + ": expected 5 columns");
    ScoreRow row;
    row.series_id = series;
    auto parse_ll = [&](const std::string& cell, numerics::Index& out_val) {
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out_val);
      if (ec != std::errc{} || ptr != cell.data() + cell.size())
        fail(path, "line " + std::to_string(line_no) + ": bad integer '" + cell + "'");
    };
    parse_ll(w, row.window_index);
    parse_ll(p, row.position);
    parse_ll(g, row.global_time_index);
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), row.score);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      fail(path, "line " + std::to_string(line_no) + ": bad score '" + s + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << text;
  if (!out) throw ArtifactError("failed while writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace encdecad::serde
