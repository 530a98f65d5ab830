#include "ariapipe/tokenizer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <sstream>

namespace ariapipe {

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view kind_name(const Token& tok) {
    return std::visit(overloaded{
                          [](const PadTok&) { return std::string_view("<PAD>"); },
                          [](const BosTok&) { return std::string_view("<S>"); },
                          [](const EosTok&) { return std::string_view("<E>"); },
                          [](const SegTok&) { return std::string_view("<T>"); },
                          [](const DimTok&) { return std::string_view("<D>"); },
                          [](const NoteTok&) { return std::string_view("note"); },
                          [](const DrumTok&) { return std::string_view("drum"); },
                          [](const OnsetTok&) { return std::string_view("onset"); },
                          [](const DurTok&) { return std::string_view("duration"); },
                      },
                      tok);
}

}  // namespace

VelocityQuant quantize_velocity(int velocity) noexcept {
    const int bin = std::clamp(velocity / kVelocityBinWidth, 0, kNumVelocityBins - 1);
    return {bin, velocity_representative(bin)};
}

int velocity_representative(int bin) noexcept {
    return std::clamp(bin * kVelocityBinWidth + 5, 1, 127);
}

std::int64_t quantize_ms(std::int64_t ms) noexcept {
    if (ms >= 0) return (ms + kTimeQuantumMs / 2) / kTimeQuantumMs * kTimeQuantumMs;
    return -((-ms + kTimeQuantumMs / 2) / kTimeQuantumMs * kTimeQuantumMs);
}

std::string to_string(const Token& tok) {
    return std::visit(
        overloaded{
            [](const NoteTok& t) {
                return fmt::format("{}:{}:{}", class_name(t.instrument_class), t.pitch,
                                   velocity_representative(t.velocity_bin));
            },
            [](const DrumTok& t) { return fmt::format("drum:{}", t.note_number); },
            [](const OnsetTok& t) { return fmt::format("onset:{}", t.ms); },
            [](const DurTok& t) { return fmt::format("dur:{}", t.ms); },
            [&tok](const auto&) { return std::string(kind_name(tok)); },
        },
        tok);
}

std::optional<Token> token_from_string(std::string_view text) {
    if (text == "<PAD>") return PadTok{};
    if (text == "<S>") return BosTok{};
    if (text == "<E>") return EosTok{};
    if (text == "<T>") return SegTok{};
    if (text == "<D>") return DimTok{};

    const auto parts = split(text, ':');
    if (parts.size() == 2) {
        const auto v = parse_int(parts[1]);
        if (!v) return std::nullopt;
        if (parts[0] == "drum" && *v >= 0 && *v <= 127) {
            return DrumTok{static_cast<std::uint8_t>(*v)};
        }
        if (parts[0] == "onset") return OnsetTok{*v};
        if (parts[0] == "dur") return DurTok{*v};
        return std::nullopt;
    }
    if (parts.size() == 3) {
        const auto cls = class_from_name(parts[0]);
        const auto pitch = parse_int(parts[1]);
        const auto vel = parse_int(parts[2]);
        if (!cls || is_percussion(*cls) || !pitch || !vel) return std::nullopt;
        if (*pitch < 0 || *pitch > 127 || *vel < 1 || *vel > 127) return std::nullopt;
        return NoteTok{*cls, static_cast<std::uint8_t>(*pitch),
                       static_cast<std::uint8_t>(quantize_velocity(*vel).bin)};
    }
    return std::nullopt;
}

// Vocabulary

Vocabulary::Vocabulary(TokenizerConfig config) : config_(config) {
    if (config_.segment_ms <= 0 || config_.segment_ms % kTimeQuantumMs != 0) {
        throw std::invalid_argument("segment_ms must be a positive multiple of 10");
    }
    if (config_.max_duration_ms <= 0 || config_.max_duration_ms % kTimeQuantumMs != 0) {
        throw std::invalid_argument("max_duration_ms must be a positive multiple of 10");
    }

    tokens_ = {PadTok{}, BosTok{}, EosTok{}, SegTok{}, DimTok{}};
    note_base_ = static_cast<TokenId>(tokens_.size());
    for (int c = 0; c < kNumPitchedClasses; ++c) {
        for (int p = 0; p < 128; ++p) {
            for (int b = 0; b < kNumVelocityBins; ++b) {
                tokens_.push_back(NoteTok{static_cast<InstrumentClass>(c), static_cast<std::uint8_t>(p),
                                          static_cast<std::uint8_t>(b)});
            }
        }
    }
    drum_base_ = static_cast<TokenId>(tokens_.size());
    for (int n = 0; n < 128; ++n) tokens_.push_back(DrumTok{static_cast<std::uint8_t>(n)});
    onset_base_ = static_cast<TokenId>(tokens_.size());
    for (int ms = 0; ms < config_.segment_ms; ms += kTimeQuantumMs) tokens_.push_back(OnsetTok{ms});
    dur_base_ = static_cast<TokenId>(tokens_.size());
    for (int ms = kTimeQuantumMs; ms <= config_.max_duration_ms; ms += kTimeQuantumMs) {
        tokens_.push_back(DurTok{ms});
    }
}

std::optional<TokenId> Vocabulary::lookup(const Token& tok) const noexcept {
    return std::visit(
        overloaded{
            [](const PadTok&) -> std::optional<TokenId> { return 0; },
            [](const BosTok&) -> std::optional<TokenId> { return 1; },
            [](const EosTok&) -> std::optional<TokenId> { return 2; },
            [](const SegTok&) -> std::optional<TokenId> { return 3; },
            [](const DimTok&) -> std::optional<TokenId> { return 4; },
            [this](const NoteTok& t) -> std::optional<TokenId> {
                const int c = static_cast<int>(t.instrument_class);
                if (c >= kNumPitchedClasses || t.pitch > 127 || t.velocity_bin >= kNumVelocityBins) {
                    return std::nullopt;
                }
                return note_base_ + (c * 128 + t.pitch) * kNumVelocityBins + t.velocity_bin;
            },
            [this](const DrumTok& t) -> std::optional<TokenId> {
                if (t.note_number > 127) return std::nullopt;
                return drum_base_ + t.note_number;
            },
            [this](const OnsetTok& t) -> std::optional<TokenId> {
                if (t.ms < 0 || t.ms >= config_.segment_ms || t.ms % kTimeQuantumMs != 0) {
                    return std::nullopt;
                }
                return onset_base_ + t.ms / kTimeQuantumMs;
            },
            [this](const DurTok& t) -> std::optional<TokenId> {
                if (t.ms < kTimeQuantumMs || t.ms > config_.max_duration_ms ||
                    t.ms % kTimeQuantumMs != 0) {
                    return std::nullopt;
                }
                return dur_base_ + t.ms / kTimeQuantumMs - 1;
            },
        },
        tok);
}

TokenId Vocabulary::id(const Token& tok) const {
    if (auto v = lookup(tok)) return *v;
    throw std::out_of_range("token not in vocabulary: " + to_string(tok));
}

const Token& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range(fmt::format("token id {} out of range [0, {})", id, tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const Token& tok) const noexcept { return lookup(tok).has_value(); }

std::string Vocabulary::serialize() const {
    std::string out;
    out.reserve(tokens_.size() * 16);
    out += "# ariapipe vocabulary\n";
    out += "version\t1\n";
    out += fmt::format("segment_ms\t{}\n", config_.segment_ms);
    out += fmt::format("max_duration_ms\t{}\n", config_.max_duration_ms);
    out += fmt::format("size\t{}\n", tokens_.size());
    out += "---\n";
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        out += to_string(tokens_[i]);
        out += '\t';
        out += std::to_string(i);
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
    TokenizerConfig config;
    std::optional<std::size_t> size;
    std::size_t pos = 0;
    auto next_line = [&]() -> std::optional<std::string_view> {
        if (pos >= text.size()) return std::nullopt;
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        return line;
    };

    bool body = false;
    while (!body) {
        auto line = next_line();
        if (!line) throw std::invalid_argument("vocabulary: missing body separator");
        if (line->empty() || line->front() == '#') continue;
        if (*line == "---") {
            body = true;
            break;
        }
        const auto kv = split(*line, '\t');
        if (kv.size() != 2) throw std::invalid_argument("vocabulary: malformed header line");
        const auto v = parse_int(kv[1]);
        if (!v) throw std::invalid_argument("vocabulary: non-integer header value");
        if (kv[0] == "version" && *v != 1) throw std::invalid_argument("vocabulary: unsupported version");
        if (kv[0] == "segment_ms") config.segment_ms = *v;
        if (kv[0] == "max_duration_ms") config.max_duration_ms = *v;
        if (kv[0] == "size") size = static_cast<std::size_t>(*v);
    }

    Vocabulary vocab(config);
    if (size && *size != vocab.size()) throw std::invalid_argument("vocabulary: size mismatch");
    std::size_t expected = 0;
    while (auto line = next_line()) {
        if (line->empty()) continue;
        const auto kv = split(*line, '\t');
        const auto id = kv.size() == 2 ? parse_int(kv[1]) : std::nullopt;
        if (!id || static_cast<std::size_t>(*id) != expected ||
            to_string(vocab.token(*id)) != kv[0]) {
            throw std::invalid_argument(fmt::format("vocabulary: entry {} does not match", expected));
        }
        ++expected;
    }
    if (expected != vocab.size()) throw std::invalid_argument("vocabulary: truncated body");
    return vocab;
}

// TokenSeq

TokenSeq TokenSeq::from_tokens(std::vector<Token> tokens, const Vocabulary& vocab) {
    TokenSeq seq;
    seq.ids.reserve(tokens.size());
    for (const auto& t : tokens) seq.ids.push_back(vocab.id(t));
    seq.tokens = std::move(tokens);
    return seq;
}

TokenSeq TokenSeq::from_ids(std::span<const TokenId> ids, const Vocabulary& vocab) {
    TokenSeq seq;
    seq.ids.assign(ids.begin(), ids.end());
    seq.tokens.reserve(ids.size());
    for (auto id : ids) seq.tokens.push_back(vocab.token(id));
    return seq;
}

void TokenSeq::push_back(const Token& tok, const Vocabulary& vocab) {
    ids.push_back(vocab.id(tok));
    tokens.push_back(tok);
}

GrammarError::GrammarError(std::size_t index, std::string expected, const std::string& found)
    : std::runtime_error(fmt::format("token {}: expected {}, found {}", index, expected, found)),
      index_(index),
      expected_(std::move(expected)) {}

// Tokenizer

TokenSeq Tokenizer::tokenize(const NoteList& notes) const {
    const auto& cfg = config();
    TokenSeq seq;
    seq.tokens.reserve(notes.size() * 3 + 1);
    seq.tokens.emplace_back(BosTok{});

    std::int64_t segment = 0;
    for (const auto& n : notes.notes) {
        const std::int64_t onset = quantize_ms(n.onset_ms);
        const std::int64_t note_segment = onset / cfg.segment_ms;
        for (; segment < note_segment; ++segment) seq.tokens.emplace_back(SegTok{});
        const auto within = static_cast<std::int32_t>(onset % cfg.segment_ms);

        if (n.percussive()) {
            seq.tokens.emplace_back(DrumTok{n.pitch});
            seq.tokens.emplace_back(OnsetTok{within});
            continue;
        }
        const auto dur = std::clamp<std::int64_t>(quantize_ms(n.duration_ms()), kTimeQuantumMs,
                                                  cfg.max_duration_ms);
        seq.tokens.emplace_back(NoteTok{n.instrument_class, n.pitch,
                                        static_cast<std::uint8_t>(quantize_velocity(n.velocity).bin)});
        seq.tokens.emplace_back(OnsetTok{within});
        seq.tokens.emplace_back(DurTok{static_cast<std::int32_t>(dur)});
    }

    seq.ids.reserve(seq.tokens.size());
    for (const auto& t : seq.tokens) seq.ids.push_back(vocab_.id(t));
    return seq;
}

NoteList Tokenizer::detokenize(const TokenSeq& seq) const {
    const auto& toks = seq.tokens;
    const auto seg_ms = config().segment_ms;
    auto found = [&](std::size_t i) {
        return i < toks.size() ? to_string(toks[i]) : std::string("end of sequence");
    };
    auto expect_onset = [&](std::size_t i) -> std::int32_t {
        if (i >= toks.size() || !std::holds_alternative<OnsetTok>(toks[i])) {
            throw GrammarError(i, "onset", found(i));
        }
        return std::get<OnsetTok>(toks[i]).ms;
    };

    if (toks.empty() || !std::holds_alternative<BosTok>(toks[0])) throw GrammarError(0, "<S>", found(0));

    NoteList out;
    std::int64_t segment = 0;
    std::int32_t last_onset = 0;
    std::optional<std::size_t> open_segment;  // a `<T>` not yet followed by a note group
    std::size_t i = 1;
    for (; i < toks.size(); ++i) {
        const Token& t = toks[i];
        if (std::holds_alternative<SegTok>(t)) {
            ++segment;
            last_onset = 0;
            if (!open_segment) open_segment = i;
        } else if (std::holds_alternative<DimTok>(t)) {
            continue;
        } else if (const auto* nt = std::get_if<NoteTok>(&t)) {
            const auto onset = expect_onset(i + 1);
            if (onset < last_onset) throw GrammarError(i + 1, "non-decreasing onset", found(i + 1));
            if (i + 2 >= toks.size() || !std::holds_alternative<DurTok>(toks[i + 2])) {
                throw GrammarError(i + 2, "duration", found(i + 2));
            }
            const auto dur = std::get<DurTok>(toks[i + 2]).ms;
            const std::int64_t abs_onset = segment * seg_ms + onset;
            out.notes.push_back(Note{abs_onset, nt->pitch, nt->instrument_class, abs_onset + dur,
                                     static_cast<std::uint8_t>(velocity_representative(nt->velocity_bin))});
            last_onset = onset;
            open_segment.reset();
            i += 2;
        } else if (const auto* dt = std::get_if<DrumTok>(&t)) {
            const auto onset = expect_onset(i + 1);
            if (onset < last_onset) throw GrammarError(i + 1, "non-decreasing onset", found(i + 1));
            const std::int64_t abs_onset = segment * seg_ms + onset;
            out.notes.push_back(Note{abs_onset, dt->note_number, InstrumentClass::Percussion, abs_onset,
                                     static_cast<std::uint8_t>(kDrumVelocity)});
            last_onset = onset;
            open_segment.reset();
            i += 1;
        } else if (std::holds_alternative<EosTok>(t) || std::holds_alternative<PadTok>(t)) {
            break;
        } else {
            throw GrammarError(i, "note, drum, <T>, <D> or <E>", found(i));
        }
    }
    if (open_segment) throw GrammarError(*open_segment, "note or drum after <T>", found(i));
    if (i < toks.size() && std::holds_alternative<EosTok>(toks[i])) ++i;
    for (; i < toks.size(); ++i) {
        if (!std::holds_alternative<PadTok>(toks[i])) throw GrammarError(i, "<PAD>", found(i));
    }

    sort_notes(out);
    return out;
}

std::vector<NoteGroup> note_groups(const TokenSeq& seq) {
    std::vector<NoteGroup> groups;
    std::int64_t segment = 0;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        const Token& t = seq.tokens[i];
        if (std::holds_alternative<SegTok>(t)) {
            ++segment;
        } else if (std::holds_alternative<NoteTok>(t) || std::holds_alternative<DrumTok>(t)) {
            if (i + 1 >= seq.tokens.size() || !std::holds_alternative<OnsetTok>(seq.tokens[i + 1])) {
                throw std::invalid_argument(fmt::format("note group at {} lacks an onset token", i));
            }
            groups.push_back({i, segment, std::get<OnsetTok>(seq.tokens[i + 1]).ms});
        }
    }
    return groups;
}

std::int64_t elapsed_ms(std::span<const NoteGroup> groups, std::size_t i, std::size_t j,
                        int segment_ms) {
    if (i >= groups.size() || j >= groups.size()) {
        throw std::out_of_range(fmt::format("note index out of range ({}, {}) of {}", i, j, groups.size()));
    }
    const auto& a = groups[i];
    const auto& b = groups[j];
    return (a.segment - b.segment) * segment_ms + a.onset_ms - b.onset_ms;
}

std::int64_t Tokenizer::elapsed_ms(const TokenSeq& seq, std::size_t i, std::size_t j) const {
    const auto groups = note_groups(seq);
    return ariapipe::elapsed_ms(groups, i, j, config().segment_ms);
}

}  // namespace ariapipe
