#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ariapipe/augment.hpp"
#include "ariapipe/curate.hpp"
#include "ariapipe/embed_math.hpp"
#include "ariapipe/midi_io.hpp"
#include "ariapipe/sampler.hpp"
#include "ariapipe/shard_io.hpp"
#include "ariapipe/tokenizer.hpp"

namespace ariapipe::pipeline {

inline constexpr int kConfigVersion = 1;
inline constexpr std::string_view kToolVersion = "1.0.0";

enum class PackMode { Pretrain, Finetune };

struct PipelineConfig {
    std::filesystem::path input_dir;
    std::optional<std::filesystem::path> catalog_path;
    std::filesystem::path output_dir;
    curate::FilterThresholds thresholds;
    AugmentConfig augment;
    TokenizerConfig tokenizer;
    std::size_t seq_len = kDefaultSeqLen;
    std::size_t d_offset = kDefaultDimOffset;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    shard::Format format = shard::Format::Text;
    bool disjoint_views = false;

    /// Fails fast on unusable values; when check_paths, also on missing inputs.
    void validate(bool check_paths = true) const;

    /// Canonical form with sorted keys.
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);

    /// Hash of the canonical form, excluding runtime-only settings (workers), so
    /// outputs do not depend on parallelism.
    std::string provenance_hash() const;
};

struct FileError {
    std::string source_id;
    std::string stage;
    std::string message;
};

struct StageResult {
    std::string stage;
    std::size_t files_in = 0;
    std::size_t files_out = 0;
    std::size_t records = 0;
    std::vector<FileError> errors;
    std::vector<std::filesystem::path> outputs;

    int exit_code() const noexcept { return errors.empty() ? 0 : 3; }
};

/// Thrown when a stage's upstream artifact is missing.
class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Results must be
/// written by index so output order never depends on completion order.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

/// *.mid / *.midi under dir, as sorted generic relative paths.
std::vector<std::string> list_midi_files(const std::filesystem::path& dir);

StageResult run_scan(const PipelineConfig& config);
StageResult run_filter(const PipelineConfig& config);
StageResult run_tokenize(const PipelineConfig& config);
StageResult run_pack(const PipelineConfig& config, PackMode mode);
StageResult run_views(const PipelineConfig& config);
StageResult run_stats(const PipelineConfig& config);

/// scan, filter, tokenize, pack (pretrain and finetune), views, stats.
std::vector<StageResult> run_all(const PipelineConfig& config);

struct NtXentReport {
    std::size_t pairs = 0;
    std::size_t dim = 0;
    double tau = 0.0;
    double loss = 0.0;
    embed::GradientCheck grad_check;
    bool grad_check_passed = false;
    std::string isa;
    std::vector<std::string> skipped;  // source ids without two slices
};

inline constexpr double kGradCheckTolerance = 1e-5;

/// Pairs the first two slices of each source (sorted by source id) into a batch.
NtXentReport run_ntxent(const std::filesystem::path& embeddings, double tau, bool grad_check = true,
                        const std::optional<std::filesystem::path>& pooled_out = std::nullopt);

nlohmann::json to_json(const StageResult& r);
nlohmann::json to_json(const NtXentReport& r);

/// Parse and resolve one MIDI file; source_id is set on the result.
midi::Resolution load_notes(const std::filesystem::path& path, const std::string& source_id);

}  // namespace ariapipe::pipeline
