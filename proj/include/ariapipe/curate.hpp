#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ariapipe/note.hpp"

namespace ariapipe::curate {

/// Raised when a metric is undefined for its input (empty list, no pitched
/// notes, fewer notes than the n-gram order).
class DegenerateInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Notes per second over the onset span, with the span floored at 1 s.
double note_density(const NoteList& notes);

/// Shannon entropy (bits) of the pitch-class histogram of pitched notes.
double pitch_entropy(const NoteList& notes);

/// Shannon entropy (bits) of pitched-note durations on the 10 ms grid,
/// durations above 5000 ms sharing the top bucket.
double duration_entropy(const NoteList& notes);

/// Largest gap between consecutive sounding regions, where a region is the
/// union of [onset, offset] intervals. 0 when fully covered.
std::int64_t max_silence_gap(const NoteList& notes);

/// 1 - distinct/total over n-note windows of pitched-note pitch intervals.
double repetition_score(const NoteList& notes, int n = 8);

double shannon_entropy_bits(const std::vector<std::uint64_t>& counts);

struct FilterThresholds {
    double min_note_density = 0.5;
    double max_note_density = 50.0;
    double min_pitch_entropy = 1.5;
    double min_duration_entropy = 0.5;
    std::int64_t max_silence_gap_ms = 15000;
    double max_repetition = 0.95;
    int repetition_order = 8;

    bool check_density = true;
    bool check_pitch_entropy = true;
    bool check_duration_entropy = true;
    bool check_silence = true;
    bool check_repetition = true;

    void validate() const;
};

enum class Metric { NoteDensity, PitchEntropy, DurationEntropy, SilenceGap, Repetition };

std::string_view metric_name(Metric m) noexcept;

struct MetricResult {
    Metric metric;
    std::optional<double> value;  // absent when the metric was undefined
    bool passed = false;
    std::string reason;           // empty when passed
};

struct FilterReport {
    std::vector<MetricResult> metrics;  // enabled metrics only
    bool passed = false;
    std::vector<std::string> reasons;
};

FilterReport apply_quality_filters(const NoteList& notes, const FilterThresholds& thresholds);

// Catalog and composition-duplicate rule.

struct FileMetadata {
    std::string source_id;
    std::optional<std::string> composer;
    std::optional<std::string> opus;
    std::optional<std::string> piece_number;

    bool tagged() const noexcept { return opus.has_value() || piece_number.has_value(); }
    friend bool operator==(const FileMetadata&, const FileMetadata&) = default;
};

inline constexpr std::size_t kComposerTaggedThreshold = 250;
inline constexpr std::size_t kMaxPerComposition = 10;

enum class DedupeReason { Kept, CompositionQuota, UntaggedOverrepresented };

std::string_view reason_name(DedupeReason r) noexcept;

struct DedupeDecision {
    std::string source_id;
    bool keep = true;
    DedupeReason reason = DedupeReason::Kept;

    friend bool operator==(const DedupeDecision&, const DedupeDecision&) = default;
};

/// For composers with more than 250 tagged files, keeps the lexicographically
/// smallest 10 source ids per (opus, piece_number) key and discards the
/// composer's untagged files. Output is sorted by source_id. Throws
/// std::invalid_argument on duplicate source ids.
std::vector<DedupeDecision> dedupe_by_opus(const std::vector<FileMetadata>& catalog);

/// Tab-separated: source_id, composer, opus, piece_number; empty field = absent.
/// Lines starting with '#' are comments.
std::vector<FileMetadata> parse_catalog(std::string_view text);
std::string format_catalog(const std::vector<FileMetadata>& catalog);

}  // namespace ariapipe::curate
