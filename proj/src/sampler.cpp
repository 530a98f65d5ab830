#include "ariapipe/sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstdint>

#include "ariapipe/rng.hpp"

namespace ariapipe {

SequencePacker::SequencePacker(std::size_t seq_len, TokenId pad_id, Sink sink)
    : seq_len_(seq_len), pad_id_(pad_id), sink_(std::move(sink)) {
    if (seq_len_ < 2) throw std::invalid_argument("seq_len must be >= 2");
    current_.ids.reserve(seq_len_);
}

void SequencePacker::push(std::span<const TokenId> file) {
    if (file.empty()) throw std::invalid_argument("cannot pack an empty token sequence");
    current_.boundary_offsets.push_back(current_.ids.size());
    while (!file.empty()) {
        const std::size_t room = seq_len_ - current_.ids.size();
        const std::size_t take = std::min(room, file.size());
        current_.ids.insert(current_.ids.end(), file.begin(), file.begin() + static_cast<std::ptrdiff_t>(take));
        file = file.subspan(take);
        if (current_.ids.size() == seq_len_) flush();
    }
}

void SequencePacker::finish() {
    if (current_.ids.empty()) return;
    current_.pad_count = seq_len_ - current_.ids.size();
    current_.ids.resize(seq_len_, pad_id_);
    flush();
}

void SequencePacker::flush() {
    sink_(std::move(current_));
    current_ = PackedSequence{};
    current_.ids.reserve(seq_len_);
}

std::vector<PackedSequence> pack_pretraining_sequences(const std::vector<std::vector<TokenId>>& files,
                                                       std::size_t seq_len, TokenId pad_id) {
    std::vector<PackedSequence> out;
    SequencePacker packer(seq_len, pad_id, [&out](PackedSequence&& s) { out.push_back(std::move(s)); });
    for (const auto& f : files) packer.push(f);
    packer.finish();
    return out;
}

std::vector<std::vector<TokenId>> unpack_sequences(std::span<const PackedSequence> sequences) {
    std::vector<TokenId> stream;
    std::vector<std::size_t> starts;
    for (const auto& s : sequences) {
        const std::size_t base = stream.size();
        for (auto b : s.boundary_offsets) starts.push_back(base + b);
        stream.insert(stream.end(), s.ids.begin(), s.ids.end() - static_cast<std::ptrdiff_t>(s.pad_count));
    }
    std::vector<std::vector<TokenId>> files;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : stream.size();
        files.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(starts[k]),
                           stream.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return files;
}

PackedSequence make_finetune_sequence(const TokenSeq& file, const Vocabulary& vocab, std::size_t seq_len,
                                      std::size_t d_offset) {
    if (seq_len < 2) throw std::invalid_argument("seq_len must be >= 2");
    if (file.ids.empty()) throw std::invalid_argument("cannot build a finetune sequence from an empty file");

    PackedSequence out;
    out.boundary_offsets.push_back(0);
    const std::size_t len = file.ids.size();
    if (len + 1 > seq_len) {
        out.ids.assign(file.ids.begin(), file.ids.begin() + static_cast<std::ptrdiff_t>(seq_len));
        return out;
    }

    // Candidates sit before a note group or `<T>` (never directly after a `<T>`),
    // or at the end. Nearest to the target wins; ties go to the earlier point.
    const std::size_t target = len > d_offset + 1 ? len - d_offset : 1;
    std::size_t insert_at = 1;
    std::size_t best = SIZE_MAX;
    for (std::size_t p = 1; p <= len; ++p) {
        const bool boundary =
            p == len || ((std::holds_alternative<NoteTok>(file.tokens[p]) ||
                          std::holds_alternative<DrumTok>(file.tokens[p]) ||
                          std::holds_alternative<SegTok>(file.tokens[p])) &&
                         !std::holds_alternative<SegTok>(file.tokens[p - 1]));
        if (!boundary) continue;
        const std::size_t dist = p > target ? p - target : target - p;
        if (dist < best) {
            best = dist;
            insert_at = p;
        }
        if (p > target) break;
    }

    out.ids.reserve(seq_len);
    out.ids.insert(out.ids.end(), file.ids.begin(), file.ids.begin() + static_cast<std::ptrdiff_t>(insert_at));
    out.ids.push_back(vocab.dim_id());
    out.ids.insert(out.ids.end(), file.ids.begin() + static_cast<std::ptrdiff_t>(insert_at), file.ids.end());
    out.pad_count = seq_len - out.ids.size();
    out.ids.resize(seq_len, vocab.pad_id());
    return out;
}

std::pair<ViewSlice, ViewSlice> choose_view_slices(std::size_t n, std::uint64_t seed, std::uint64_t stream_id,
                                                   ViewOptions options) {
    if (n < 2 * kMinViewNotes) {
        throw TooFewNotes(fmt::format("contrastive views need at least {} notes, got {}", 2 * kMinViewNotes, n));
    }
    const CounterRng rng(seed, stream_id);
    const auto draw = [&](std::uint64_t counter, std::size_t lo, std::size_t hi) {
        return static_cast<std::size_t>(
            rng.uniform_int(counter, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    };

    const std::size_t max_len = std::min(kMaxViewNotes, n - kMinViewNotes);
    ViewSlice a;
    ViewSlice b;
    a.count = draw(0, kMinViewNotes, max_len);

    if (!options.disjoint) {
        b.count = draw(1, kMinViewNotes, max_len);
        a.start = draw(2, 0, n - a.count);
        b.start = draw(3, 0, n - b.count);
        if (a.start == b.start) {
            a.start = 0;
            b.start = n - b.count;
        }
        return {a, b};
    }

    b.count = draw(1, kMinViewNotes, std::min(kMaxViewNotes, n - a.count));
    const std::size_t free = n - a.count - b.count;
    const bool a_first = draw(2, 0, 1) == 0;
    ViewSlice& first = a_first ? a : b;
    ViewSlice& second = a_first ? b : a;
    first.start = draw(3, 0, free);
    second.start = draw(4, first.start + first.count, n - second.count);
    return {a, b};
}

NoteList rebase_to_first_segment(NoteList notes, int segment_ms) {
    if (notes.empty()) return notes;
    const std::int64_t first = notes.notes.front().onset_ms;
    const std::int64_t shift = first >= 0 ? (first / segment_ms) * segment_ms : 0;
    for (auto& n : notes.notes) {
        n.onset_ms -= shift;
        n.offset_ms -= shift;
    }
    return notes;
}

namespace {

NoteList slice_notes(const NoteList& notes, ViewSlice s) {
    NoteList out;
    out.source_id = notes.source_id;
    out.notes.assign(notes.notes.begin() + static_cast<std::ptrdiff_t>(s.start),
                     notes.notes.begin() + static_cast<std::ptrdiff_t>(s.start + s.count));
    return out;
}

TokenSeq make_view(const NoteList& notes, ViewSlice s, const AugmentConfig& config, std::uint64_t stream,
                   const Tokenizer& tokenizer) {
    auto view = random_augment(slice_notes(notes, s), config, stream);
    view = rebase_to_first_segment(std::move(view), tokenizer.config().segment_ms);
    auto seq = tokenizer.tokenize(view);
    seq.push_back(EosTok{}, tokenizer.vocabulary());
    return seq;
}

}  // namespace

ViewPair draw_contrastive_views(const NoteList& notes, const AugmentConfig& config, std::uint64_t stream_id,
                                const Tokenizer& tokenizer, ViewOptions options) {
    config.validate();
    const auto [a, b] = choose_view_slices(notes.size(), config.seed, stream_id, options);
    ViewPair pair;
    pair.source_id = notes.source_id;
    pair.slice_a = a;
    pair.slice_b = b;
    pair.view_a = make_view(notes, a, config, substream(stream_id, 1), tokenizer);
    pair.view_b = make_view(notes, b, config, substream(stream_id, 2), tokenizer);
    return pair;
}

}  // namespace ariapipe
