#include "ariapipe/curate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <tuple>
#include <array>
#include <cmath>
#include <map>
#include <string_view>
#include <unordered_set>
#include <utility>

namespace ariapipe::curate {

namespace {

constexpr std::int64_t kDurationBucketCapMs = 5000;

void require_nonempty(const NoteList& notes) {
    if (notes.empty()) throw DegenerateInput("empty note list");
}

std::vector<const Note*> pitched(const NoteList& notes) {
    std::vector<const Note*> out;
    out.reserve(notes.size());
    for (const auto& n : notes.notes) {
        if (!n.percussive()) out.push_back(&n);
    }
    if (out.empty()) throw DegenerateInput("no pitched notes");
    return out;
}

}  // namespace

double shannon_entropy_bits(const std::vector<std::uint64_t>& counts) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) return 0.0;
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0 || c == total) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

double note_density(const NoteList& notes) {
    require_nonempty(notes);
    auto [lo, hi] = std::minmax_element(notes.notes.begin(), notes.notes.end(),
                                        [](const Note& a, const Note& b) { return a.onset_ms < b.onset_ms; });
    const double span_s = std::max(static_cast<double>(hi->onset_ms - lo->onset_ms) / 1000.0, 1.0);
    return static_cast<double>(notes.size()) / span_s;
}

double pitch_entropy(const NoteList& notes) {
    require_nonempty(notes);
    std::vector<std::uint64_t> counts(12, 0);
    for (const Note* n : pitched(notes)) ++counts[n->pitch % 12];
    return shannon_entropy_bits(counts);
}

double duration_entropy(const NoteList& notes) {
    require_nonempty(notes);
    std::vector<std::uint64_t> counts(kDurationBucketCapMs / 10 + 1, 0);
    for (const Note* n : pitched(notes)) {
        const auto d = std::clamp<std::int64_t>((n->duration_ms() + 5) / 10, 0, kDurationBucketCapMs / 10);
        ++counts[static_cast<std::size_t>(d)];
    }
    return shannon_entropy_bits(counts);
}

std::int64_t max_silence_gap(const NoteList& notes) {
    require_nonempty(notes);
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    spans.reserve(notes.size());
    for (const auto& n : notes.notes) spans.emplace_back(n.onset_ms, std::max(n.offset_ms, n.onset_ms));
    std::sort(spans.begin(), spans.end());

    std::int64_t gap = 0;
    std::int64_t covered_to = spans.front().second;
    for (const auto& [on, off] : spans) {
        if (on > covered_to) gap = std::max(gap, on - covered_to);
        covered_to = std::max(covered_to, off);
    }
    return gap;
}

double repetition_score(const NoteList& notes, int n) {
    if (n < 2) throw std::invalid_argument("repetition n-gram order must be >= 2");
    std::vector<const Note*> p;
    for (const auto& note : notes.notes) {
        if (!note.percussive()) p.push_back(&note);
    }
    if (p.size() < static_cast<std::size_t>(n)) {
        throw DegenerateInput(fmt::format("repetition needs at least {} pitched notes, got {}", n, p.size()));
    }

    // Intervals fit in a signed byte; each window is a byte string of n-1 intervals.
    std::string intervals;
    intervals.reserve(p.size() - 1);
    for (std::size_t i = 1; i < p.size(); ++i) {
        intervals.push_back(static_cast<char>(static_cast<int>(p[i]->pitch) - static_cast<int>(p[i - 1]->pitch)));
    }
    const std::size_t width = static_cast<std::size_t>(n) - 1;
    const std::size_t total = p.size() - width;
    std::unordered_set<std::string_view> distinct;
    distinct.reserve(total);
    const std::string_view view(intervals);
    for (std::size_t i = 0; i < total; ++i) distinct.insert(view.substr(i, width));
    return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

void FilterThresholds::validate() const {
    const std::array<double, 5> vals{min_note_density, max_note_density, min_pitch_entropy,
                                     min_duration_entropy, max_repetition};
    for (double v : vals) {
        if (!std::isfinite(v)) throw std::invalid_argument("filter thresholds must be finite");
    }
    if (min_note_density > max_note_density) {
        throw std::invalid_argument("min_note_density exceeds max_note_density");
    }
    if (min_note_density < 0 || min_pitch_entropy < 0 || min_duration_entropy < 0) {
        throw std::invalid_argument("filter minimums must be non-negative");
    }
    if (max_repetition < 0 || max_repetition > 1) throw std::invalid_argument("max_repetition must be in [0, 1]");
    if (max_silence_gap_ms < 0) throw std::invalid_argument("max_silence_gap_ms must be non-negative");
    if (repetition_order < 2) throw std::invalid_argument("repetition_order must be >= 2");
}

std::string_view metric_name(Metric m) noexcept {
    switch (m) {
        case Metric::NoteDensity: return "note_density";
        case Metric::PitchEntropy: return "pitch_entropy";
        case Metric::DurationEntropy: return "duration_entropy";
        case Metric::SilenceGap: return "max_silence_gap";
        case Metric::Repetition: return "repetition";
    }
    return "unknown";
}

FilterReport apply_quality_filters(const NoteList& notes, const FilterThresholds& t) {
    t.validate();
    FilterReport report;
    if (notes.empty()) {
        report.passed = false;
        report.reasons.emplace_back("empty");
        return report;
    }

    auto run = [&](Metric metric, bool enabled, auto&& compute, auto&& judge) {
        if (!enabled) return;
        MetricResult r{metric, std::nullopt, false, {}};
        try {
            r.value = compute();
            r.reason = judge(*r.value);
            r.passed = r.reason.empty();
        } catch (const DegenerateInput& e) {
            r.reason = fmt::format("{}: {}", metric_name(metric), e.what());
        }
        if (!r.passed) report.reasons.push_back(r.reason);
        report.metrics.push_back(std::move(r));
    };

    run(Metric::NoteDensity, t.check_density, [&] { return note_density(notes); },
        [&](double v) -> std::string {
            if (v < t.min_note_density) return fmt::format("note_density {:.4f} < {}", v, t.min_note_density);
            if (v > t.max_note_density) return fmt::format("note_density {:.4f} > {}", v, t.max_note_density);
            return {};
        });
    run(Metric::PitchEntropy, t.check_pitch_entropy, [&] { return pitch_entropy(notes); },
        [&](double v) -> std::string {
            if (v < t.min_pitch_entropy) return fmt::format("pitch_entropy {:.4f} < {}", v, t.min_pitch_entropy);
            return {};
        });
    run(Metric::DurationEntropy, t.check_duration_entropy, [&] { return duration_entropy(notes); },
        [&](double v) -> std::string {
            if (v < t.min_duration_entropy) {
                return fmt::format("duration_entropy {:.4f} < {}", v, t.min_duration_entropy);
            }
            return {};
        });
    run(Metric::SilenceGap, t.check_silence,
        [&] { return static_cast<double>(max_silence_gap(notes)); },
        [&](double v) -> std::string {
            if (v > static_cast<double>(t.max_silence_gap_ms)) {
                return fmt::format("max_silence_gap {} > {}", v, t.max_silence_gap_ms);
            }
            return {};
        });
    run(Metric::Repetition, t.check_repetition, [&] { return repetition_score(notes, t.repetition_order); },
        [&](double v) -> std::string {
            if (v > t.max_repetition) return fmt::format("repetition {:.4f} > {}", v, t.max_repetition);
            return {};
        });

    report.passed = report.reasons.empty();
    return report;
}

std::string_view reason_name(DedupeReason r) noexcept {
    switch (r) {
        case DedupeReason::Kept: return "kept";
        case DedupeReason::CompositionQuota: return "composition_quota";
        case DedupeReason::UntaggedOverrepresented: return "untagged_overrepresented_composer";
    }
    return "unknown";
}

std::vector<DedupeDecision> dedupe_by_opus(const std::vector<FileMetadata>& catalog) {
    std::vector<const FileMetadata*> sorted;
    sorted.reserve(catalog.size());
    for (const auto& m : catalog) sorted.push_back(&m);
    std::sort(sorted.begin(), sorted.end(),
              [](const FileMetadata* a, const FileMetadata* b) { return a->source_id < b->source_id; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->source_id == sorted[i - 1]->source_id) {
            throw std::invalid_argument("duplicate source_id in catalog: " + sorted[i]->source_id);
        }
    }

    std::map<std::string, std::size_t> tagged_per_composer;
    for (const auto* m : sorted) {
        if (m->composer && m->tagged()) ++tagged_per_composer[*m->composer];
    }

    using CompositionKey = std::tuple<std::string, std::optional<std::string>, std::optional<std::string>>;
    std::map<CompositionKey, std::size_t> seen;

    std::vector<DedupeDecision> out;
    out.reserve(sorted.size());
    for (const auto* m : sorted) {
        DedupeDecision d{m->source_id, true, DedupeReason::Kept};
        const bool crowded = m->composer && tagged_per_composer[*m->composer] > kComposerTaggedThreshold;
        if (crowded) {
            if (!m->tagged()) {
                d = {m->source_id, false, DedupeReason::UntaggedOverrepresented};
            } else if (++seen[{*m->composer, m->opus, m->piece_number}] > kMaxPerComposition) {
                d = {m->source_id, false, DedupeReason::CompositionQuota};
            }
        }
        out.push_back(std::move(d));
    }
    return out;
}

namespace {

std::optional<std::string> field(std::string_view s) {
    if (s.empty()) return std::nullopt;
    return std::string(s);
}

}  // namespace

std::vector<FileMetadata> parse_catalog(std::string_view text) {
    std::vector<FileMetadata> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        std::array<std::string_view, 4> cols{};
        std::size_t n = 0;
        std::size_t start = 0;
        while (n < cols.size()) {
            const auto tab = line.find('\t', start);
            cols[n++] = line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start);
            if (tab == std::string_view::npos) break;
            start = tab + 1;
        }
        if (cols[0].empty()) throw std::invalid_argument(fmt::format("catalog line {}: empty source_id", line_no));
        out.push_back({std::string(cols[0]), field(cols[1]), field(cols[2]), field(cols[3])});
    }
    return out;
}

std::string format_catalog(const std::vector<FileMetadata>& catalog) {
    std::string out = "# source_id\tcomposer\topus\tpiece_number\n";
    for (const auto& m : catalog) {
        out += fmt::format("{}\t{}\t{}\t{}\n", m.source_id, m.composer.value_or(""), m.opus.value_or(""),
                           m.piece_number.value_or(""));
    }
    return out;
}

}  // namespace ariapipe::curate
