// Generates the bundled test fixtures deterministically:
//   <root>/corpus/*.mid + catalog.tsv   (50 files)
//   <root>/golden/three_notes.mid
#include <fmt/format.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ariapipe/curate.hpp"
#include "ariapipe/rng.hpp"
#include "midi_builder.hpp"

namespace fs = std::filesystem;
using testmidi::Track;

namespace {

class Draw {
public:
    explicit Draw(std::uint64_t stream) : rng_(0xF1C7u, stream) {}
    int i(int lo, int hi) { return static_cast<int>(rng_.uniform_int(n_++, lo, hi)); }
    bool chance(int percent) { return i(0, 99) < percent; }

private:
    ariapipe::CounterRng rng_;
    std::uint64_t n_ = 0;
};

void write(const fs::path& path, const testmidi::Bytes& bytes) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

constexpr int kMajor[7] = {0, 2, 4, 5, 7, 9, 11};

// Melody over a left-hand accompaniment, optional pedal, strings and drums.
testmidi::Bytes piece(int index, int seconds, bool with_gap = false) {
    Draw d(static_cast<std::uint64_t>(index) + 1);
    const int divisions[3] = {480, 384, 960};
    const int div = divisions[d.i(0, 2)];
    const std::uint32_t us = static_cast<std::uint32_t>(d.i(400, 700) * 1000);
    const int key = d.i(0, 11);
    const bool pedal = d.chance(60);
    const bool strings = d.chance(25);
    const bool drums = d.chance(20);
    const bool tempo_change = d.chance(40);
    const int format = d.chance(30) ? 0 : 1;
    const bool running = d.chance(50);

    const auto beats_total = static_cast<std::uint32_t>(seconds * 1'000'000.0 / us);
    const auto tick = [&](double beats) { return static_cast<std::uint32_t>(beats * div + 0.5); };

    // Format 0 puts every event in one track.
    std::vector<Track> tracks(format == 0 ? 1 : 4);
    Track& meta = tracks[0];
    Track& keys = tracks[format == 0 ? 0 : 1];
    Track& s = tracks[format == 0 ? 0 : 2];
    Track& t = tracks[format == 0 ? 0 : 3];
    meta.text(0, "fixture " + std::to_string(index)).tempo(0, us);
    if (tempo_change) meta.tempo(tick(beats_total / 2.0), us * 4 / 5);
    keys.program(0, 0, d.chance(80) ? 0 : d.i(1, 7));

    const double lengths[6] = {0.25, 0.5, 0.5, 1.0, 1.5, 2.0};
    const double gap_from = beats_total * 0.4;
    const double gap_beats = 20'000'000.0 / us;
    auto shifted = [&](double b) { return with_gap && b >= gap_from ? b + gap_beats : b; };

    int degree = d.i(7, 13);
    for (double b = 0; b < beats_total;) {
        const double len = lengths[d.i(0, 5)];
        degree = std::clamp(degree + d.i(-3, 3), 3, 20);
        const int pitch = 48 + key + 12 * (degree / 7) + kMajor[degree % 7];
        const double hold = len * (d.i(60, 100) / 100.0);
        keys.note_on(tick(shifted(b)), 0, pitch, d.i(45, 100));
        keys.note_off(tick(shifted(b) + hold), 0, pitch, d.chance(30));
        b += len;
    }
    for (double b = 0; b < beats_total; b += 2) {
        const int root = 36 + key + kMajor[d.i(0, 6)];
        for (int k : {0, 4, 7}) {
            keys.note(tick(shifted(b)), tick(shifted(b) + d.i(10, 19) / 10.0), 0, root + k, d.i(35, 80));
        }
        if (pedal) {
            keys.pedal(tick(shifted(b)) + 1, 0, true);
            keys.pedal(tick(shifted(b) + 1.9), 0, false);
        }
    }
    if (strings) {
        s.program(0, 1, 48);
        for (double b = 0; b < beats_total; b += 4) {
            s.note(tick(shifted(b)), tick(shifted(b) + 3.5), 1, 60 + key + kMajor[d.i(0, 6)], d.i(40, 70));
        }
    }
    if (drums) {
        for (double b = 0; b < beats_total; b += 1) {
            t.note(tick(shifted(b)), tick(shifted(b) + 0.1), 9, static_cast<int>(b) % 2 ? 38 : 36,
                   d.i(60, 110));
        }
    }
    return testmidi::smf(format, div, tracks, running);
}

testmidi::Bytes loop_file() {
    Track t;
    const int loop[4] = {60, 64, 67, 72};
    for (int r = 0; r < 150; ++r) {
        for (int k = 0; k < 4; ++k) {
            const auto on = static_cast<std::uint32_t>((r * 4 + k) * 240);
            t.note(on, on + 200, 0, loop[k], 80);
        }
    }
    return testmidi::smf(0, 480, {t});
}

testmidi::Bytes monotone_file() {
    Track t;
    std::uint32_t now = 0;
    for (int k = 0; k < 300; ++k) {
        const std::uint32_t len = 120u * static_cast<std::uint32_t>(1 + k % 4);
        t.note(now, now + len, 0, 62, 70);
        now += len;
    }
    return testmidi::smf(0, 480, {t});
}

testmidi::Bytes sparse_file() {
    Track t;
    for (int k = 0; k < 12; ++k) {
        const auto on = static_cast<std::uint32_t>(k * 8000);
        t.note(on, on + 500 + 100 * static_cast<std::uint32_t>(k), 0, 55 + 3 * k, 64);
    }
    return testmidi::smf(0, 960, {t});
}

testmidi::Bytes three_note_file() {
    Track meta;
    meta.tempo(0, 500000);
    Track t;
    t.program(0, 0, 0);
    t.note(960, 960 + 2880, 0, 60, 60);
    t.note(2880, 2880 + 2880, 0, 64, 60);
    t.note(4800, 4800 + 2880, 0, 67, 60);
    return testmidi::smf(1, 480, {meta, t});
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: make_fixtures <fixtures-root>\n");
        return 2;
    }
    const fs::path root = argv[1];
    const fs::path corpus = root / "corpus";
    fs::remove_all(corpus);

    const char* composers[4] = {"bach", "chopin", "debussy", "satie"};
    std::vector<ariapipe::curate::FileMetadata> catalog;
    Draw meta(999);
    for (int i = 0; i < 43; ++i) {
        const std::string id = (i % 10 == 9 ? "set_b/" : "") + fmt::format("piece_{:03d}.mid", i);
        write(corpus / id, piece(i, 50 + (i * 7) % 60));
        ariapipe::curate::FileMetadata m{id, {}, {}, {}};
        if (i % 5 != 4) m.composer = composers[i % 4];
        if (m.composer && meta.chance(70)) m.opus = std::to_string(meta.i(1, 6));
        if (m.composer && meta.chance(50)) m.piece_number = std::to_string(meta.i(1, 3));
        catalog.push_back(m);
    }
    write(corpus / "short_ok.mid", piece(100, 25));
    write(corpus / "fail_silence.mid", piece(101, 60, true));
    write(corpus / "fail_loop.mid", loop_file());
    write(corpus / "fail_monotone.mid", monotone_file());
    write(corpus / "fail_sparse.mid", sparse_file());
    write(corpus / "three_notes_like.mid", three_note_file());
    auto broken = piece(102, 30);
    broken.resize(broken.size() / 2);
    write(corpus / "corrupt_truncated.mid", broken);

    std::ofstream(corpus / "catalog.tsv", std::ios::binary) << ariapipe::curate::format_catalog(catalog);
    write(root / "golden" / "three_notes.mid", three_note_file());
    return 0;
}
