#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "encdecad/detection.hpp"
#include "encdecad/scoring.hpp"
#include "encdecad/training.hpp"

namespace encdecad::serde {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// FNV-1a 64 over the canonical (sorted-key) dump, as 16 hex digits.
std::string config_hash(const json& config);
std::string fnv1a_hex(std::string_view bytes);

// Doubles survive JSON round trips bit-exactly; non-finite values are encoded
// as the strings "inf", "-inf", "nan".
json number_to_json(double value);
double number_from_json(const json& j);

json matrix_to_json(const numerics::Matrix& m);  // row-major flat array
numerics::Matrix matrix_from_json(const json& j, numerics::Index rows, numerics::Index cols);
json vector_to_json(const numerics::Vector& v);
numerics::Vector vector_from_json(const json& j, numerics::Index size);

// Payload builders (no envelope); every parameter array is row-major and
// keyed by its block name.
json model_payload(const lstm::EncDecModel& model);
lstm::EncDecModel model_from_payload(const json& j);
json gradients_payload(const lstm::ModelGradients& g);
lstm::ModelGradients gradients_from_payload(const json& j, const lstm::EncDecModel& shape);
json checkpoint_payload(const training::TrainCheckpoint& ckpt);
training::TrainCheckpoint checkpoint_from_payload(const json& j);
json error_model_payload(const scoring::GaussianErrorModel& model);
scoring::GaussianErrorModel error_model_from_payload(const json& j);
json threshold_payload(const detection::Threshold& threshold);
detection::Threshold threshold_from_payload(const json& j);
json metrics_payload(const detection::Metrics& metrics);
detection::Metrics metrics_from_payload(const json& j);
json train_report_payload(const training::TrainReport& report);
training::TrainReport train_report_from_payload(const json& j);

// Envelope: {"format_version", "kind", "config_hash", ...payload}. Reading
// rejects a wrong kind or format_version; hash checking is the caller's call.
void write_artifact(const std::filesystem::path& path, const std::string& kind, json payload,
                    const std::string& config_hash);
json read_artifact(const std::filesystem::path& path, const std::string& kind,
                   std::string* config_hash_out = nullptr);

void save_model(const std::filesystem::path& path, const lstm::EncDecModel& model,
                const std::string& config_hash, const training::TrainReport* report = nullptr);
lstm::EncDecModel load_model(const std::filesystem::path& path, std::string* config_hash_out = nullptr);
void save_checkpoint(const std::filesystem::path& path, const training::TrainCheckpoint& ckpt,
                     const std::string& config_hash);
training::TrainCheckpoint load_checkpoint(const std::filesystem::path& path,
                                          std::string* config_hash_out = nullptr);
void save_error_model(const std::filesystem::path& path, const scoring::GaussianErrorModel& model,
                      const std::string& config_hash);
scoring::GaussianErrorModel load_error_model(const std::filesystem::path& path,
                                             std::string* config_hash_out = nullptr);
void save_threshold(const std::filesystem::path& path, const detection::Threshold& threshold,
                    const std::string& config_hash);
detection::Threshold load_threshold(const std::filesystem::path& path,
                                    std::string* config_hash_out = nullptr);

struct ScoreRow {
  std::string series_id;
  numerics::Index window_index = 0;      // id within the prepared dataset
  numerics::Index position = 0;          // position inside the window
  numerics::Index global_time_index = 0; // window start + position, per series
  double score = 0.0;
};

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace encdecad::serde
