#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ariapipe/augment.hpp"
#include "ariapipe/note.hpp"
#include "ariapipe/tokenizer.hpp"

namespace ariapipe {

inline constexpr std::size_t kDefaultSeqLen = 8192;
inline constexpr std::size_t kDefaultDimOffset = 100;

struct PackedSequence {
    std::vector<TokenId> ids;
    std::vector<std::size_t> boundary_offsets;  // where a new source file begins
    std::size_t pad_count = 0;                  // trailing PadTok count

    bool padded() const noexcept { return pad_count > 0; }
    friend bool operator==(const PackedSequence&, const PackedSequence&) = default;
};

/// Streaming packer: files are concatenated in push order and cut into
/// fixed-length windows; a file may span windows. finish() pads the last
/// partial window.
class SequencePacker {
public:
    using Sink = std::function<void(PackedSequence&&)>;

    SequencePacker(std::size_t seq_len, TokenId pad_id, Sink sink);

    void push(std::span<const TokenId> file);
    void finish();

private:
    void flush();

    std::size_t seq_len_;
    TokenId pad_id_;
    Sink sink_;
    PackedSequence current_;
};

/// Convenience wrapper over SequencePacker.
std::vector<PackedSequence> pack_pretraining_sequences(const std::vector<std::vector<TokenId>>& files,
                                                       std::size_t seq_len, TokenId pad_id);

/// Inverse of packing: splits the concatenated non-pad stream at the boundaries.
std::vector<std::vector<TokenId>> unpack_sequences(std::span<const PackedSequence> sequences);

/// One window starting at the file's BosTok. When the whole file fits with
/// room for one more token, `<D>` is inserted at the note-group boundary nearest
/// to (length - d_offset), earlier on ties, never before position 1; the rest is padded.
PackedSequence make_finetune_sequence(const TokenSeq& file, const Vocabulary& vocab,
                                      std::size_t seq_len = kDefaultSeqLen,
                                      std::size_t d_offset = kDefaultDimOffset);

class TooFewNotes : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kMinViewNotes = 100;
inline constexpr std::size_t kMaxViewNotes = 650;

struct ViewOptions {
    bool disjoint = false;  // require non-overlapping slices
};

struct ViewSlice {
    std::size_t start = 0;
    std::size_t count = 0;
    friend bool operator==(const ViewSlice&, const ViewSlice&) = default;
};

struct ViewPair {
    TokenSeq view_a;
    TokenSeq view_b;
    std::string source_id;
    ViewSlice slice_a;
    ViewSlice slice_b;

    friend bool operator==(const ViewPair&, const ViewPair&) = default;
};

/// Picks two slices with different start indices (and no overlap when
/// options.disjoint), each 100..min(650, n - 100) notes. Deterministic in
/// (config.seed, stream_id).
std::pair<ViewSlice, ViewSlice> choose_view_slices(std::size_t note_count, std::uint64_t seed,
                                                   std::uint64_t stream_id, ViewOptions options = {});

/// Shifts timing so the first note lands in segment 0 at its original
/// within-segment position.
NoteList rebase_to_first_segment(NoteList notes, int segment_ms);

/// Throws TooFewNotes for files under 200 notes.
ViewPair draw_contrastive_views(const NoteList& notes, const AugmentConfig& config, std::uint64_t stream_id,
                                const Tokenizer& tokenizer, ViewOptions options = {});

}  // namespace ariapipe
