#include "ariapipe/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "ariapipe/midi_io.hpp"
#include "ariapipe/rng.hpp"
#include "ariapipe/simd_kernels.hpp"

namespace ariapipe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// Config

void PipelineConfig::validate(bool check_paths) const {
    thresholds.validate();
    augment.validate();
    TokenizerConfig probe = tokenizer;
    (void)Vocabulary(probe);
    if (seq_len < 2) throw std::invalid_argument("seq_len must be >= 2");
    if (workers == 0) throw std::invalid_argument("workers must be >= 1");
    if (output_dir.empty()) throw std::invalid_argument("output_dir is required");
    if (check_paths) {
        if (input_dir.empty() || !fs::is_directory(input_dir)) {
            throw std::invalid_argument("input_dir is not a directory: " + input_dir.string());
        }
        if (catalog_path && !fs::is_regular_file(*catalog_path)) {
            throw std::invalid_argument("catalog not found: " + catalog_path->string());
        }
    }
}

json PipelineConfig::to_json() const {
    const auto& t = thresholds;
    json j;
    j["version"] = kConfigVersion;
    j["input_dir"] = input_dir.generic_string();
    j["catalog"] = catalog_path ? json(catalog_path->generic_string()) : json(nullptr);
    j["output_dir"] = output_dir.generic_string();
    j["seq_len"] = seq_len;
    j["d_offset"] = d_offset;
    j["seed"] = seed;
    j["workers"] = workers;
    j["format"] = shard::format_name(format);
    j["disjoint_views"] = disjoint_views;
    j["filters"] = {
        {"min_note_density", t.min_note_density},       {"max_note_density", t.max_note_density},
        {"min_pitch_entropy", t.min_pitch_entropy},     {"min_duration_entropy", t.min_duration_entropy},
        {"max_silence_gap_ms", t.max_silence_gap_ms},   {"max_repetition", t.max_repetition},
        {"repetition_order", t.repetition_order},       {"check_density", t.check_density},
        {"check_pitch_entropy", t.check_pitch_entropy}, {"check_duration_entropy", t.check_duration_entropy},
        {"check_silence", t.check_silence},             {"check_repetition", t.check_repetition},
    };
    j["augment"] = {
        {"max_transpose", augment.max_transpose},
        {"tempo_min", augment.tempo_min},
        {"tempo_max", augment.tempo_max},
        {"max_velocity_jitter", augment.max_velocity_jitter},
    };
    j["tokenizer"] = {{"segment_ms", tokenizer.segment_ms}, {"max_duration_ms", tokenizer.max_duration_ms}};
    return j;
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    if (j.value("version", kConfigVersion) != kConfigVersion) {
        throw std::invalid_argument(fmt::format("unsupported config version {}", j["version"].dump()));
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };

    PipelineConfig c;
    if (j.contains("input_dir")) c.input_dir = resolve(j["input_dir"].get<std::string>());
    if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"].get<std::string>());
    if (j.contains("catalog") && !j["catalog"].is_null()) c.catalog_path = resolve(j["catalog"].get<std::string>());
    c.seq_len = j.value("seq_len", c.seq_len);
    c.d_offset = j.value("d_offset", c.d_offset);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.disjoint_views = j.value("disjoint_views", c.disjoint_views);
    if (j.contains("format")) {
        const auto f = shard::format_from_name(j["format"].get<std::string>());
        if (!f) throw std::invalid_argument("format must be text or binary");
        c.format = *f;
    }
    if (j.contains("filters")) {
        const auto& f = j["filters"];
        auto& t = c.thresholds;
        t.min_note_density = f.value("min_note_density", t.min_note_density);
        t.max_note_density = f.value("max_note_density", t.max_note_density);
        t.min_pitch_entropy = f.value("min_pitch_entropy", t.min_pitch_entropy);
        t.min_duration_entropy = f.value("min_duration_entropy", t.min_duration_entropy);
        t.max_silence_gap_ms = f.value("max_silence_gap_ms", t.max_silence_gap_ms);
        t.max_repetition = f.value("max_repetition", t.max_repetition);
        t.repetition_order = f.value("repetition_order", t.repetition_order);
        t.check_density = f.value("check_density", t.check_density);
        t.check_pitch_entropy = f.value("check_pitch_entropy", t.check_pitch_entropy);
        t.check_duration_entropy = f.value("check_duration_entropy", t.check_duration_entropy);
        t.check_silence = f.value("check_silence", t.check_silence);
        t.check_repetition = f.value("check_repetition", t.check_repetition);
    }
    if (j.contains("augment")) {
        const auto& a = j["augment"];
        c.augment.max_transpose = a.value("max_transpose", c.augment.max_transpose);
        c.augment.tempo_min = a.value("tempo_min", c.augment.tempo_min);
        c.augment.tempo_max = a.value("tempo_max", c.augment.tempo_max);
        c.augment.max_velocity_jitter = a.value("max_velocity_jitter", c.augment.max_velocity_jitter);
    }
    if (j.contains("tokenizer")) {
        const auto& t = j["tokenizer"];
        c.tokenizer.segment_ms = t.value("segment_ms", c.tokenizer.segment_ms);
        c.tokenizer.max_duration_ms = t.value("max_duration_ms", c.tokenizer.max_duration_ms);
    }
    c.augment.seed = c.seed;
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    const auto text = shard::read_all(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(fmt::format("config {}: {}", path.string(), e.what()));
    }
    return from_json(j, path.parent_path());
}

std::string PipelineConfig::provenance_hash() const {
    auto j = to_json();
    j.erase("workers");
    j.erase("output_dir");
    // Equivalent spellings of the same input path must hash the same.
    const auto canonical = [](const fs::path& p) {
        auto n = fs::absolute(p).lexically_normal();
        return (n.has_filename() ? n : n.parent_path()).generic_string();
    };
    if (!input_dir.empty()) j["input_dir"] = canonical(input_dir);
    if (catalog_path) j["catalog"] = canonical(*catalog_path);
    return fmt::format("{:016x}", stable_hash(j.dump()));
}

// Infrastructure

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                // Stop handing out work and surface the first failure after join.
                next.store(count);
                const std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<std::string> list_midi_files(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".mid" || ext == ".midi") out.push_back(fs::relative(entry.path(), dir).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

midi::Resolution load_notes(const fs::path& path, const std::string& source_id) {
    const auto bytes = midi::read_file(path.string());
    auto res = midi::resolve_notes(midi::parse_midi(bytes));
    res.notes.source_id = source_id;
    return res;
}

namespace {

json provenance(const PipelineConfig& c, std::string_view stage) {
    return {{"config_hash", c.provenance_hash()},
            {"config_version", kConfigVersion},
            {"stage", stage},
            {"tool_version", kToolVersion}};
}

void write_jsonl(const fs::path& path, const json& header, const std::vector<json>& rows) {
    std::string out = json{{"provenance", header}}.dump() + "\n";
    for (const auto& r : rows) out += r.dump() + "\n";
    shard::write_atomic(path, out);
}

std::vector<json> read_jsonl_records(const fs::path& path) {
    if (!fs::exists(path)) throw MissingInput("missing upstream artifact: " + path.string());
    const auto text = shard::read_all(path);
    std::vector<json> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const auto line = std::string_view(text).substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        auto j = json::parse(line);
        if (!j.contains("provenance")) rows.push_back(std::move(j));
    }
    return rows;
}

void write_errors(const PipelineConfig& c, StageResult& r) {
    std::vector<json> rows;
    for (const auto& e : r.errors) {
        rows.push_back({{"source_id", e.source_id}, {"stage", e.stage}, {"error", e.message}});
    }
    const auto path = c.output_dir / fmt::format("{}_errors.jsonl", r.stage);
    write_jsonl(path, provenance(c, r.stage), rows);
    r.outputs.push_back(path);
    for (const auto& e : r.errors) spdlog::warn("{}: {}: {}", r.stage, e.source_id, e.message);
}

struct ManifestEntry {
    std::string source_id;
    bool keep = false;
    std::string reason;
};

std::vector<ManifestEntry> read_manifest(const PipelineConfig& c) {
    const auto path = c.output_dir / "manifest.tsv";
    if (!fs::exists(path)) throw MissingInput("missing manifest (run filter first): " + path.string());
    const auto text = shard::read_all(path);
    std::vector<ManifestEntry> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty() || line.front() == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos) throw std::runtime_error("malformed manifest line: " + line);
        out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1) == "keep",
                       t2 == std::string::npos ? std::string{} : line.substr(t2 + 1)});
    }
    return out;
}

std::vector<std::string> kept_sources(const PipelineConfig& c) {
    std::vector<std::string> out;
    for (const auto& e : read_manifest(c)) {
        if (e.keep) out.push_back(e.source_id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

fs::path find_shard(const PipelineConfig& c, std::string_view stem) {
    for (auto f : {c.format, c.format == shard::Format::Text ? shard::Format::Binary : shard::Format::Text}) {
        const auto p = c.output_dir / shard::shard_file_name(stem, f);
        if (fs::exists(p)) return p;
    }
    throw MissingInput(fmt::format("missing {} shard in {}", stem, c.output_dir.string()));
}

}  // namespace

// Stages

StageResult run_scan(const PipelineConfig& c) {
    c.validate();
    StageResult r;
    r.stage = "scan";
    const auto files = list_midi_files(c.input_dir);
    r.files_in = files.size();
    spdlog::info("scan: {} MIDI files under {}", files.size(), c.input_dir.string());

    struct Entry {
        bool ok = false;
        std::size_t notes = 0;
        std::size_t warnings = 0;
        std::int64_t duration_ms = 0;
        std::string error;
    };
    std::vector<Entry> entries(files.size());
    parallel_for(files.size(), c.workers, [&](std::size_t i) {
        try {
            const auto res = load_notes(c.input_dir / files[i], files[i]);
            entries[i].ok = true;
            entries[i].notes = res.notes.size();
            entries[i].warnings = res.warnings.size();
            for (const auto& n : res.notes.notes) {
                entries[i].duration_ms = std::max(entries[i].duration_ms, n.offset_ms);
            }
        } catch (const std::exception& e) {
            entries[i].error = e.what();
        }
    });

    std::vector<json> rows;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto& e = entries[i];
        json row{{"source_id", files[i]}, {"status", e.ok ? "ok" : "error"}};
        if (e.ok) {
            row["notes"] = e.notes;
            row["warnings"] = e.warnings;
            row["duration_ms"] = e.duration_ms;
            ++r.files_out;
        } else {
            row["error"] = e.error;
            r.errors.push_back({files[i], "scan", e.error});
        }
        rows.push_back(std::move(row));
    }
    fs::create_directories(c.output_dir);
    write_jsonl(c.output_dir / "scan.jsonl", provenance(c, "scan"), rows);
    r.outputs.push_back(c.output_dir / "scan.jsonl");

    std::map<std::string, curate::FileMetadata> known;
    if (c.catalog_path) {
        for (auto& m : curate::parse_catalog(shard::read_all(*c.catalog_path))) known[m.source_id] = std::move(m);
    }
    std::vector<curate::FileMetadata> catalog;
    for (const auto& f : files) {
        auto it = known.find(f);
        catalog.push_back(it != known.end() ? it->second : curate::FileMetadata{f, {}, {}, {}});
    }
    shard::write_atomic(c.output_dir / "catalog.tsv", curate::format_catalog(catalog));
    r.outputs.push_back(c.output_dir / "catalog.tsv");
    r.records = rows.size();
    write_errors(c, r);
    return r;
}

StageResult run_filter(const PipelineConfig& c) {
    c.validate();
    StageResult r;
    r.stage = "filter";
    const auto scan = read_jsonl_records(c.output_dir / "scan.jsonl");
    const auto catalog_path = c.output_dir / "catalog.tsv";
    if (!fs::exists(catalog_path)) throw MissingInput("missing catalog (run scan first)");
    std::map<std::string, curate::FileMetadata> catalog;
    for (auto& m : curate::parse_catalog(shard::read_all(catalog_path))) catalog[m.source_id] = std::move(m);

    std::vector<std::string> ids;
    std::vector<bool> scanned_ok;
    for (const auto& row : scan) {
        ids.push_back(row.at("source_id").get<std::string>());
        scanned_ok.push_back(row.at("status") == "ok");
    }
    r.files_in = ids.size();

    std::vector<std::optional<curate::FilterReport>> reports(ids.size());
    std::vector<std::string> load_errors(ids.size());
    parallel_for(ids.size(), c.workers, [&](std::size_t i) {
        if (!scanned_ok[i]) return;
        try {
            reports[i] = curate::apply_quality_filters(load_notes(c.input_dir / ids[i], ids[i]).notes, c.thresholds);
        } catch (const std::exception& e) {
            load_errors[i] = e.what();
        }
    });

    std::vector<ManifestEntry> manifest(ids.size());
    std::vector<curate::FileMetadata> passing;
    std::vector<json> report_rows;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        manifest[i].source_id = ids[i];
        if (!scanned_ok[i]) {
            manifest[i].reason = "scan_error";
            continue;
        }
        if (!reports[i]) {
            manifest[i].reason = "load_error";
            r.errors.push_back({ids[i], "filter", load_errors[i]});
            continue;
        }
        const auto& rep = *reports[i];
        json metrics = json::object();
        for (const auto& m : rep.metrics) {
            metrics[std::string(curate::metric_name(m.metric))] = {
                {"value", m.value ? json(*m.value) : json(nullptr)}, {"passed", m.passed}};
        }
        report_rows.push_back({{"source_id", ids[i]}, {"passed", rep.passed}, {"metrics", metrics},
                               {"reasons", rep.reasons}});
        if (rep.passed) {
            auto it = catalog.find(ids[i]);
            passing.push_back(it != catalog.end() ? it->second : curate::FileMetadata{ids[i], {}, {}, {}});
        } else {
            std::string reason = "quality";
            for (const auto& s : rep.reasons) reason += (reason.size() == 7 ? ": " : "; ") + s;
            manifest[i].reason = reason;
        }
    }

    std::map<std::string, curate::DedupeDecision> dedupe;
    for (auto& d : curate::dedupe_by_opus(passing)) dedupe[d.source_id] = d;
    std::size_t kept = 0;
    std::size_t discarded = 0;
    std::string text = "# source_id\tdecision\treason\n";
    for (auto& m : manifest) {
        if (auto it = dedupe.find(m.source_id); it != dedupe.end()) {
            m.keep = it->second.keep;
            m.reason = std::string(curate::reason_name(it->second.reason));
        }
        (m.keep ? kept : discarded)++;
        text += fmt::format("{}\t{}\t{}\n", m.source_id, m.keep ? "keep" : "discard", m.reason);
    }
    if (kept + discarded != r.files_in) throw std::logic_error("filter: file conservation violated");

    write_jsonl(c.output_dir / "filter_reports.jsonl", provenance(c, "filter"), report_rows);
    shard::write_atomic(c.output_dir / "manifest.tsv", text);
    r.outputs.push_back(c.output_dir / "filter_reports.jsonl");
    r.outputs.push_back(c.output_dir / "manifest.tsv");
    r.files_out = kept;
    r.records = manifest.size();
    spdlog::info("filter: {} in, {} kept, {} discarded", r.files_in, kept, discarded);
    write_errors(c, r);
    return r;
}

StageResult run_tokenize(const PipelineConfig& c) {
    c.validate();
    StageResult r;
    r.stage = "tokenize";
    const auto ids = kept_sources(c);
    r.files_in = ids.size();
    const Tokenizer tokenizer(c.tokenizer);

    std::vector<std::optional<shard::Record>> records(ids.size());
    std::vector<std::string> errors(ids.size());
    parallel_for(ids.size(), c.workers, [&](std::size_t i) {
        try {
            const auto seq = tokenizer.tokenize(load_notes(c.input_dir / ids[i], ids[i]).notes);
            records[i] = shard::Record{ids[i], shard::RecordKind::Tokens, seq.ids, {}, 0};
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    shard::Shard out{provenance(c, "tokenize"), {}};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (records[i]) {
            out.records.push_back(std::move(*records[i]));
        } else {
            r.errors.push_back({ids[i], "tokenize", errors[i]});
        }
    }
    const auto path = c.output_dir / shard::shard_file_name("tokens", c.format);
    shard::write_shard(path, out, c.format);
    shard::write_atomic(c.output_dir / "vocab.txt", tokenizer.vocabulary().serialize());
    r.outputs = {path, c.output_dir / "vocab.txt"};
    r.files_out = r.records = out.records.size();
    write_errors(c, r);
    return r;
}

StageResult run_pack(const PipelineConfig& c, PackMode mode) {
    c.validate(false);  // reads only the tokens shard
    StageResult r;
    r.stage = mode == PackMode::Pretrain ? "pack_pretrain" : "pack_finetune";
    const auto tokens = shard::read_shard(find_shard(c, "tokens"));
    const Tokenizer tokenizer(c.tokenizer);
    const auto& vocab = tokenizer.vocabulary();
    r.files_in = tokens.records.size();

    shard::Shard out{provenance(c, r.stage), {}};
    if (mode == PackMode::Pretrain) {
        std::size_t index = 0;
        SequencePacker packer(c.seq_len, vocab.pad_id(), [&](PackedSequence&& s) {
            shard::Record rec{fmt::format("pack-{:06d}", index++), shard::RecordKind::Pretrain, std::move(s.ids), {},
                              static_cast<std::uint32_t>(s.pad_count)};
            for (auto b : s.boundary_offsets) rec.boundaries.push_back(static_cast<std::uint32_t>(b));
            out.records.push_back(std::move(rec));
        });
        for (const auto& rec : tokens.records) packer.push(rec.ids);
        packer.finish();
    } else {
        for (const auto& rec : tokens.records) {
            try {
                const auto seq = TokenSeq::from_ids(rec.ids, vocab);
                auto s = make_finetune_sequence(seq, vocab, c.seq_len, c.d_offset);
                out.records.push_back({rec.source_id, shard::RecordKind::Finetune, std::move(s.ids), {0},
                                       static_cast<std::uint32_t>(s.pad_count)});
            } catch (const std::exception& e) {
                r.errors.push_back({rec.source_id, r.stage, e.what()});
            }
        }
    }
    const auto path = c.output_dir / shard::shard_file_name(
                                         mode == PackMode::Pretrain ? "pretrain" : "finetune", c.format);
    shard::write_shard(path, out, c.format);
    r.outputs.push_back(path);
    r.files_out = r.files_in - r.errors.size();
    r.records = out.records.size();
    write_errors(c, r);
    return r;
}

StageResult run_views(const PipelineConfig& c) {
    c.validate();
    StageResult r;
    r.stage = "views";
    const auto ids = kept_sources(c);
    r.files_in = ids.size();
    const Tokenizer tokenizer(c.tokenizer);
    AugmentConfig aug = c.augment;
    aug.seed = c.seed;
    const ViewOptions options{c.disjoint_views};

    std::vector<std::optional<ViewPair>> pairs(ids.size());
    std::vector<std::string> skipped(ids.size());
    std::vector<std::string> errors(ids.size());
    parallel_for(ids.size(), c.workers, [&](std::size_t i) {
        try {
            const auto notes = load_notes(c.input_dir / ids[i], ids[i]).notes;
            pairs[i] = draw_contrastive_views(notes, aug, stable_hash(ids[i]), tokenizer, options);
        } catch (const TooFewNotes& e) {
            skipped[i] = e.what();
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    shard::Shard out{provenance(c, "views"), {}};
    std::vector<json> skip_rows;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (pairs[i]) {
            out.records.push_back({ids[i], shard::RecordKind::ViewA, pairs[i]->view_a.ids, {}, 0});
            out.records.push_back({ids[i], shard::RecordKind::ViewB, pairs[i]->view_b.ids, {}, 0});
            ++r.files_out;
        } else if (!skipped[i].empty()) {
            skip_rows.push_back({{"source_id", ids[i]}, {"reason", skipped[i]}});
        } else {
            r.errors.push_back({ids[i], "views", errors[i]});
        }
    }
    const auto path = c.output_dir / shard::shard_file_name("views", c.format);
    shard::write_shard(path, out, c.format);
    write_jsonl(c.output_dir / "views_skipped.jsonl", provenance(c, "views"), skip_rows);
    r.outputs = {path, c.output_dir / "views_skipped.jsonl"};
    r.records = out.records.size();
    write_errors(c, r);
    return r;
}

namespace {

json shard_stats(const shard::Shard& s, const Vocabulary& vocab) {
    std::vector<std::size_t> lengths;
    std::map<std::string, std::uint64_t> kinds;
    std::map<TokenId, std::uint64_t> histogram;
    std::uint64_t total = 0;
    std::uint64_t non_pad = 0;
    std::size_t typical_views = 0;
    std::size_t views = 0;
    for (const auto& rec : s.records) {
        const std::size_t len = rec.ids.size() - rec.pad_count;
        lengths.push_back(len);
        total += rec.ids.size();
        non_pad += len;
        if (rec.kind == shard::RecordKind::ViewA || rec.kind == shard::RecordKind::ViewB) {
            ++views;
            if (len >= 300 && len <= 2000) ++typical_views;
        }
        for (auto id : rec.ids) {
            ++histogram[id];
            const auto& tok = vocab.token(id);
            std::string name = to_string(tok);
            if (std::holds_alternative<NoteTok>(tok)) name = "note";
            else if (std::holds_alternative<DrumTok>(tok)) name = "drum";
            else if (std::holds_alternative<OnsetTok>(tok)) name = "onset";
            else if (std::holds_alternative<DurTok>(tok)) name = "dur";
            ++kinds[name];
        }
    }
    std::sort(lengths.begin(), lengths.end());
    auto pct = [&](double q) -> std::size_t {
        if (lengths.empty()) return 0;
        return lengths[static_cast<std::size_t>(q * static_cast<double>(lengths.size() - 1) + 0.5)];
    };
    json hist = json::object();
    for (const auto& [id, n] : histogram) hist[std::to_string(id)] = n;
    json j{{"records", s.records.size()},
           {"total_tokens", total},
           {"non_pad_tokens", non_pad},
           {"length",
            {{"min", lengths.empty() ? 0 : lengths.front()},
             {"max", lengths.empty() ? 0 : lengths.back()},
             {"mean", lengths.empty() ? 0.0 : static_cast<double>(non_pad) / static_cast<double>(lengths.size())},
             {"p50", pct(0.5)},
             {"p90", pct(0.9)}}},
           {"kind_histogram", kinds},
           {"id_histogram", hist},
           {"distinct_ids", histogram.size()},
           {"vocab_coverage", static_cast<double>(histogram.size()) / static_cast<double>(vocab.size())}};
    if (views > 0) {
        j["views_in_typical_token_range"] = typical_views;
        j["views_total"] = views;
    }
    return j;
}

}  // namespace

StageResult run_stats(const PipelineConfig& c) {
    c.validate(false);
    StageResult r;
    r.stage = "stats";
    const Tokenizer tokenizer(c.tokenizer);
    json report = json::object();
    report["vocab_size"] = tokenizer.vocabulary().size();
    for (const auto* stem : {"tokens", "pretrain", "finetune", "views"}) {
        fs::path path;
        try {
            path = find_shard(c, stem);
        } catch (const MissingInput&) {
            continue;
        }
        ++r.files_in;
        const auto s = shard::read_shard(path);
        report[stem] = shard_stats(s, tokenizer.vocabulary());
        r.records += s.records.size();
        if (std::string_view(stem) == "views" && report[stem].contains("views_total")) {
            spdlog::info("stats: {}/{} views within the typical 300-2000 token range",
                         report[stem]["views_in_typical_token_range"].get<std::size_t>(),
                         report[stem]["views_total"].get<std::size_t>());
        }
    }
    if (r.files_in == 0) throw MissingInput("no shards found in " + c.output_dir.string());
    report["provenance"] = provenance(c, "stats");
    shard::write_atomic(c.output_dir / "stats.json", report.dump(2) + "\n");
    r.outputs.push_back(c.output_dir / "stats.json");
    r.files_out = r.files_in;
    return r;
}

std::vector<StageResult> run_all(const PipelineConfig& c) {
    std::vector<StageResult> out;
    out.push_back(run_scan(c));
    out.push_back(run_filter(c));
    out.push_back(run_tokenize(c));
    out.push_back(run_pack(c, PackMode::Pretrain));
    out.push_back(run_pack(c, PackMode::Finetune));
    out.push_back(run_views(c));
    out.push_back(run_stats(c));
    return out;
}

NtXentReport run_ntxent(const fs::path& embeddings, double tau, bool grad_check,
                        const std::optional<fs::path>& pooled_out) {
    if (!fs::exists(embeddings)) throw MissingInput("embedding file not found: " + embeddings.string());
    auto records = shard::parse_embeddings(shard::read_all(embeddings));

    std::map<std::string, std::vector<const shard::EmbeddingRecord*>> by_source;
    for (const auto& rec : records) by_source[rec.source_id].push_back(&rec);

    NtXentReport report;
    report.tau = tau;
    report.isa = std::string(simd::isa_name(simd::active_isa()));
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    std::vector<shard::EmbeddingRecord> pooled;
    for (auto& [source, slices] : by_source) {
        std::stable_sort(slices.begin(), slices.end(),
                         [](const auto* a, const auto* b) { return a->slice_index < b->slice_index; });
        if (pooled_out) {
            std::vector<std::vector<double>> vs;
            for (const auto* s : slices) vs.push_back(s->vector);
            pooled.push_back({source, 0, embed::mean_pool_file_embedding(vs)});
        }
        if (slices.size() < 2) {
            report.skipped.push_back(source);
            continue;
        }
        first.push_back(slices[0]->vector);
        second.push_back(slices[1]->vector);
    }
    if (pooled_out) shard::write_atomic(*pooled_out, shard::format_embeddings(pooled));
    if (first.empty()) throw std::invalid_argument("no source has two slice embeddings");

    std::vector<std::vector<double>> rows = first;
    rows.insert(rows.end(), second.begin(), second.end());
    const embed::EmbeddingBatch batch(rows);
    report.pairs = batch.pair_count();
    report.dim = batch.dim();
    report.loss = embed::symmetric_loss(batch, tau);

    if (grad_check) {
        std::vector<double> flat;
        for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
        report.grad_check = embed::check_gradient(flat, rows.size(), batch.dim(), tau);
        report.grad_check_passed = report.grad_check.max_rel_error <= kGradCheckTolerance;
    }
    return report;
}

json to_json(const StageResult& r) {
    json errors = json::array();
    for (const auto& e : r.errors) errors.push_back({{"source_id", e.source_id}, {"error", e.message}});
    std::vector<std::string> outputs;
    for (const auto& p : r.outputs) outputs.push_back(p.generic_string());
    return {{"stage", r.stage},   {"files_in", r.files_in}, {"files_out", r.files_out},
            {"records", r.records}, {"errors", errors},      {"outputs", outputs}};
}

json to_json(const NtXentReport& r) {
    json j{{"pairs", r.pairs}, {"dim", r.dim}, {"tau", r.tau}, {"loss", r.loss}, {"isa", r.isa},
           {"skipped", r.skipped}};
    if (r.grad_check.evaluations > 0) {
        j["grad_check"] = {{"max_abs_error", r.grad_check.max_abs_error},
                           {"max_rel_error", r.grad_check.max_rel_error},
                           {"tolerance", kGradCheckTolerance},
                           {"passed", r.grad_check_passed}};
    }
    return j;
}

}  // namespace ariapipe::pipeline
