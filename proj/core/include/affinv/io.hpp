#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "affinv/correlation.hpp"
#include "affinv/eval.hpp"
#include "affinv/invariance.hpp"
#include "affinv/ocsvm.hpp"
#include "affinv/preflearn.hpp"
#include "affinv/synth.hpp"

// Structured-text (JSON) documents and flat CSV tables for every artifact.
//
// Every document starts with a single `"generated_at"` line; apart from that
// line, output is a pure function of its input.
namespace affinv::io {

/// Current UTC time, ISO-8601.
std::string utc_timestamp();

std::string to_json(const ocsvm::Partition& partition, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const InvariantMask& mask, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const pref::PrefModel& model, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const eval::Report& report, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const eval::SplitReports& reports, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const eval::ControlReport& report, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const std::vector<eval::SweepRow>& rows, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const synth::GroundTruth& truth, std::optional<std::string> timestamp = std::nullopt);
std::string to_json(const synth::SynthSpec& spec, std::optional<std::string> timestamp = std::nullopt);

ocsvm::Partition partition_from_json(std::string_view text);
InvariantMask mask_from_json(std::string_view text);
pref::PrefModel model_from_json(std::string_view text);
eval::Report report_from_json(std::string_view text);
eval::SplitReports split_reports_from_json(std::string_view text);
eval::ControlReport control_from_json(std::string_view text);
std::vector<eval::SweepRow> sweep_from_json(std::string_view text);
synth::GroundTruth truth_from_json(std::string_view text);
synth::SynthSpec synth_spec_from_json(std::string_view text);

std::string sign_matrix_csv(const SignMatrix& matrix);
std::string partition_csv(const ocsvm::Partition& partition);
std::string folds_csv(const std::vector<const eval::Report*>& reports);
std::string sweep_csv(const std::vector<eval::SweepRow>& rows);
std::string control_csv(const std::vector<const eval::ControlReport*>& reports);

std::string read_text(const std::filesystem::path& path);
/// Atomic write (temp file + rename).
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace affinv::io
