#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ariapipe/note.hpp"

namespace ariapipe {

inline constexpr int kTimeQuantumMs = 10;
inline constexpr int kNumVelocityBins = 12;
inline constexpr int kVelocityBinWidth = 11;
// Drum tokens carry no velocity; detokenized percussion gets this value.
inline constexpr int kDrumVelocity = 71;

struct NoteTok {
    InstrumentClass instrument_class = InstrumentClass::Piano;
    std::uint8_t pitch = 0;
    std::uint8_t velocity_bin = 0;
    friend bool operator==(const NoteTok&, const NoteTok&) = default;
};
struct DrumTok {
    std::uint8_t note_number = 0;
    friend bool operator==(const DrumTok&, const DrumTok&) = default;
};
struct OnsetTok {
    std::int32_t ms = 0;  // within-segment offset
    friend bool operator==(const OnsetTok&, const OnsetTok&) = default;
};
struct DurTok {
    std::int32_t ms = 0;
    friend bool operator==(const DurTok&, const DurTok&) = default;
};
struct SegTok {
    friend bool operator==(const SegTok&, const SegTok&) = default;
};
struct DimTok {
    friend bool operator==(const DimTok&, const DimTok&) = default;
};
struct BosTok {
    friend bool operator==(const BosTok&, const BosTok&) = default;
};
struct EosTok {
    friend bool operator==(const EosTok&, const EosTok&) = default;
};
struct PadTok {
    friend bool operator==(const PadTok&, const PadTok&) = default;
};

using Token = std::variant<PadTok, BosTok, EosTok, SegTok, DimTok, NoteTok, DrumTok, OnsetTok, DurTok>;
using TokenId = std::int32_t;

/// Human-readable token form, e.g. "piano:60:60" (class, pitch, representative
/// velocity), "drum:38", "onset:1000", "dur:3000", "<T>".
std::string to_string(const Token& tok);
std::optional<Token> token_from_string(std::string_view text);

struct VelocityQuant {
    int bin;
    int representative;
};

/// 12 bins of width 11; representative value is the bin centre.
VelocityQuant quantize_velocity(int velocity) noexcept;
int velocity_representative(int bin) noexcept;

/// Nearest multiple of 10 ms, ties away from zero.
std::int64_t quantize_ms(std::int64_t ms) noexcept;

struct TokenizerConfig {
    int segment_ms = 5000;
    int max_duration_ms = 30000;

    friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

/// Bijection between tokens and contiguous ids. Ordering: special tokens,
/// note tokens by (class, pitch, bin), drum tokens, onset tokens ascending,
/// duration tokens ascending.
class Vocabulary {
public:
    explicit Vocabulary(TokenizerConfig config = {});

    std::size_t size() const noexcept { return tokens_.size(); }
    const TokenizerConfig& config() const noexcept { return config_; }

    /// Throws std::out_of_range for tokens outside this vocabulary.
    TokenId id(const Token& tok) const;
    const Token& token(TokenId id) const;
    bool contains(const Token& tok) const noexcept;

    TokenId pad_id() const noexcept { return 0; }
    TokenId bos_id() const noexcept { return 1; }
    TokenId eos_id() const noexcept { return 2; }
    TokenId seg_id() const noexcept { return 3; }
    TokenId dim_id() const noexcept { return 4; }

    /// Versioned text form: header lines, then "token<TAB>id" sorted by id.
    std::string serialize() const;
    static Vocabulary deserialize(std::string_view text);

private:
    std::optional<TokenId> lookup(const Token& tok) const noexcept;

    TokenizerConfig config_;
    std::vector<Token> tokens_;
    TokenId note_base_ = 0;
    TokenId drum_base_ = 0;
    TokenId onset_base_ = 0;
    TokenId dur_base_ = 0;
};

inline constexpr int kNumSpecialTokens = 5;

struct TokenSeq {
    std::vector<Token> tokens;
    std::vector<TokenId> ids;

    static TokenSeq from_tokens(std::vector<Token> tokens, const Vocabulary& vocab);
    static TokenSeq from_ids(std::span<const TokenId> ids, const Vocabulary& vocab);

    std::size_t size() const noexcept { return tokens.size(); }
    void push_back(const Token& tok, const Vocabulary& vocab);

    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

class GrammarError : public std::runtime_error {
public:
    GrammarError(std::size_t index, std::string expected, const std::string& found);

    std::size_t index() const noexcept { return index_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t index_;
    std::string expected_;
};

class Tokenizer {
public:
    explicit Tokenizer(TokenizerConfig config = {}) : vocab_(config) {}

    const Vocabulary& vocabulary() const noexcept { return vocab_; }
    const TokenizerConfig& config() const noexcept { return vocab_.config(); }

    TokenSeq tokenize(const NoteList& notes) const;

    /// Inverse of tokenize. Accepts a leading BosTok, `<D>` between note groups,
    /// a trailing EosTok and trailing padding. Throws GrammarError.
    NoteList detokenize(const TokenSeq& seq) const;

    /// Signed time between note groups i and j (sequence order), computed from
    /// segment-token counts and within-segment onsets only.
    std::int64_t elapsed_ms(const TokenSeq& seq, std::size_t i, std::size_t j) const;

private:
    Vocabulary vocab_;
};

struct NoteGroup {
    std::size_t position;      // index of the NoteTok / DrumTok
    std::int64_t segment;      // number of `<T>` tokens before it
    std::int32_t onset_ms;     // within-segment onset
};

/// Note groups in sequence order. Throws std::invalid_argument if a note or
/// drum token is not followed by an onset token.
std::vector<NoteGroup> note_groups(const TokenSeq& seq);

/// elapsed_ms over a precomputed group index.
std::int64_t elapsed_ms(std::span<const NoteGroup> groups, std::size_t i, std::size_t j,
                        int segment_ms);

}  // namespace ariapipe
