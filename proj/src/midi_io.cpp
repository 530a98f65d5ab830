#include "ariapipe/midi_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <deque>
#include <fstream>
#include <iterator>

namespace ariapipe::midi {

ParseError::ParseError(std::size_t offset, const std::string& what)
    : std::runtime_error(fmt::format("offset {}: {}", offset, what)), offset_(offset) {}

namespace {

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::size_t base)
        : bytes_(bytes), base_(base) {}

    std::size_t offset() const noexcept { return base_ + pos_; }
    bool at_end() const noexcept { return pos_ >= bytes_.size(); }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void require(std::size_t n, const char* what) const {
        if (remaining() < n) throw ParseError(offset(), fmt::format("truncated {}", what));
    }

    std::uint8_t peek() const {
        require(1, "event");
        return bytes_[pos_];
    }

    std::uint8_t u8(const char* what = "event") {
        require(1, what);
        return bytes_[pos_++];
    }

    std::uint16_t u16(const char* what) {
        require(2, what);
        auto v = static_cast<std::uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
        pos_ += 4;
        return v;
    }

    // SMF variable-length quantity, at most four bytes.
    std::uint32_t vlq() {
        const std::size_t start = offset();
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8("variable-length quantity");
            v = (v << 7) | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        throw ParseError(start, "variable-length quantity longer than 4 bytes");
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        require(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

bool tag_is(std::span<const std::uint8_t> s, const char (&tag)[5]) {
    return std::equal(s.begin(), s.end(), tag);
}

std::uint8_t data_byte(ByteReader& in) {
    const std::size_t at = in.offset();
    const std::uint8_t b = in.u8();
    if (b & 0x80) throw ParseError(at, fmt::format("expected data byte, got 0x{:02X}", b));
    return b;
}

Track parse_track(ByteReader in) {
    Track track;
    std::uint64_t tick = 0;
    std::uint8_t running = 0;

    while (!in.at_end()) {
        tick += in.vlq();
        const std::size_t status_at = in.offset();
        std::uint8_t status = in.peek();
        if (status & 0x80) {
            in.u8();
        } else if (running == 0) {
            throw ParseError(status_at, "data byte without running status");
        } else {
            status = running;
        }

        Event ev;
        ev.tick = tick;
        if (status < 0xF0) {
            running = status;
            ev.channel = status & 0x0F;
            switch (status & 0xF0) {
                case 0x80: ev.kind = EventKind::NoteOff; break;
                case 0x90: ev.kind = EventKind::NoteOn; break;
                case 0xA0: ev.kind = EventKind::PolyPressure; break;
                case 0xB0: ev.kind = EventKind::ControlChange; break;
                case 0xC0: ev.kind = EventKind::ProgramChange; break;
                case 0xD0: ev.kind = EventKind::ChannelPressure; break;
                default: ev.kind = EventKind::PitchBend; break;
            }
            ev.data1 = data_byte(in);
            if (ev.kind != EventKind::ProgramChange && ev.kind != EventKind::ChannelPressure) {
                ev.data2 = data_byte(in);
            }
        } else if (status == 0xFF) {
            running = 0;
            ev.kind = EventKind::Meta;
            ev.meta_type = in.u8("meta event");
            const auto len = in.vlq();
            auto body = in.take(len, "meta event");
            ev.payload.assign(body.begin(), body.end());
            const bool end_of_track = ev.meta_type == 0x2F;
            track.push_back(std::move(ev));
            if (end_of_track) break;
            continue;
        } else if (status == 0xF0 || status == 0xF7) {
            running = 0;
            ev.kind = EventKind::SysEx;
            const auto len = in.vlq();
            auto body = in.take(len, "sysex event");
            ev.payload.assign(body.begin(), body.end());
        } else {
            throw ParseError(status_at, fmt::format("unexpected status byte 0x{:02X}", status));
        }
        track.push_back(std::move(ev));
    }
    return track;
}

TempoMap build_tempo_map(const std::vector<Track>& tracks) {
    TempoMap raw;
    for (const auto& track : tracks) {
        for (const auto& ev : track) {
            if (ev.kind == EventKind::Meta && ev.meta_type == 0x51 && ev.payload.size() >= 3) {
                const std::uint32_t tempo = (std::uint32_t{ev.payload[0]} << 16) |
                                            (std::uint32_t{ev.payload[1]} << 8) | ev.payload[2];
                if (tempo > 0) raw.push_back({ev.tick, tempo});
            }
        }
    }
    std::stable_sort(raw.begin(), raw.end(),
                     [](const TempoEntry& a, const TempoEntry& b) { return a.tick < b.tick; });

    TempoMap map;
    for (const auto& e : raw) {
        if (!map.empty() && map.back().tick == e.tick) {
            map.back() = e;  // last tempo at a tick wins
        } else {
            map.push_back(e);
        }
    }
    if (map.empty() || map.front().tick != 0) map.insert(map.begin(), TempoEntry{});
    return map;
}

std::int64_t round_ratio(unsigned __int128 num, unsigned __int128 den) {
    return static_cast<std::int64_t>((2 * num + den) / (2 * den));
}

// Prefix-accumulated tempo map for repeated conversions.
class TickClock {
public:
    TickClock(const TempoMap& map, int division) : map_(map), division_(division) {
        prefix_.reserve(map_.size());
        unsigned __int128 acc = 0;
        for (std::size_t i = 0; i < map_.size(); ++i) {
            if (i > 0) {
                acc += static_cast<unsigned __int128>(map_[i].tick - map_[i - 1].tick) *
                       map_[i - 1].us_per_quarter;
            }
            prefix_.push_back(acc);
        }
    }

    std::int64_t to_ms(std::uint64_t tick) const {
        auto it = std::upper_bound(map_.begin(), map_.end(), tick,
                                   [](std::uint64_t t, const TempoEntry& e) { return t < e.tick; });
        const auto idx = static_cast<std::size_t>(std::distance(map_.begin(), it)) - 1;
        const unsigned __int128 num =
            prefix_[idx] +
            static_cast<unsigned __int128>(tick - map_[idx].tick) * map_[idx].us_per_quarter;
        return round_ratio(num, static_cast<unsigned __int128>(division_) * 1000);
    }

private:
    const TempoMap& map_;
    int division_;
    std::vector<unsigned __int128> prefix_;
};

}  // namespace

MidiDocument parse_midi(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes, 0);
    if (bytes.size() < 4 || !tag_is(bytes.first(4), "MThd")) {
        throw ParseError(0, "missing MThd header chunk");
    }
    in.take(4, "header");
    const auto header_len = in.u32("header");
    if (header_len < 6) throw ParseError(4, "header chunk shorter than 6 bytes");
    in.require(header_len, "header chunk");

    MidiDocument doc;
    doc.format = in.u16("header");
    const int declared_tracks = in.u16("header");
    const std::size_t division_at = in.offset();
    const std::uint16_t division = in.u16("header");
    in.take(header_len - 6, "header chunk");

    if (doc.format > 1) throw ParseError(8, fmt::format("unsupported SMF format {}", doc.format));
    if (division & 0x8000) throw ParseError(division_at, "SMPTE time division is not supported");
    if (division == 0) throw ParseError(division_at, "zero ticks-per-quarter division");
    doc.division = division;

    while (!in.at_end()) {
        const std::size_t chunk_at = in.offset();
        in.require(8, "chunk header");
        auto tag = in.take(4, "chunk header");
        const auto len = in.u32("chunk header");
        if (in.remaining() < len) {
            throw ParseError(chunk_at, fmt::format("truncated chunk: declared {} bytes, {} available",
                                                   len, in.remaining()));
        }
        const std::size_t body_at = in.offset();
        auto body = in.take(len, "chunk");
        if (tag_is(tag, "MTrk")) doc.tracks.push_back(parse_track(ByteReader(body, body_at)));
    }
    if (static_cast<int>(doc.tracks.size()) < declared_tracks) {
        throw ParseError(bytes.size(), fmt::format("truncated file: header declares {} tracks, found {}",
                                                   declared_tracks, doc.tracks.size()));
    }

    doc.tempo_map = build_tempo_map(doc.tracks);
    return doc;
}

std::int64_t ticks_to_ms(std::uint64_t tick, const TempoMap& tempo_map, int division) {
    if (tempo_map.empty()) {
        return round_ratio(static_cast<unsigned __int128>(tick) * kDefaultTempo,
                           static_cast<unsigned __int128>(division) * 1000);
    }
    return TickClock(tempo_map, division).to_ms(tick);
}

Resolution resolve_notes(const MidiDocument& doc) {
    struct Ref {
        std::uint64_t tick;
        const Event* ev;
    };
    std::vector<Ref> timeline;
    std::uint64_t final_tick = 0;
    for (const auto& track : doc.tracks) {
        for (const auto& ev : track) {
            timeline.push_back({ev.tick, &ev});
            final_tick = std::max(final_tick, ev.tick);
        }
    }
    std::stable_sort(timeline.begin(), timeline.end(),
                     [](const Ref& a, const Ref& b) { return a.tick < b.tick; });

    const TempoMap tempo = doc.tempo_map.empty() ? TempoMap{TempoEntry{}} : doc.tempo_map;
    TickClock clock(tempo, doc.division);

    struct Pending {
        std::uint64_t on_tick;
        std::uint8_t velocity;
        InstrumentClass cls;
    };
    constexpr int kKeys = 16 * 128;
    std::array<std::deque<Pending>, kKeys> held;       // key down
    std::array<std::vector<Pending>, kKeys> sustained;  // key up, pedal down
    std::array<int, 16> program{};
    std::array<bool, 16> pedal{};

    Resolution out;
    auto emit = [&](int key, const Pending& p, std::uint64_t off_tick) {
        Note n;
        n.pitch = static_cast<std::uint8_t>(key & 0x7F);
        n.velocity = p.velocity;
        n.instrument_class = p.cls;
        n.onset_ms = clock.to_ms(p.on_tick);
        n.offset_ms = clock.to_ms(off_tick);
        if (n.offset_ms - n.onset_ms < kMinNoteDurationMs) {
            out.warnings.push_back(fmt::format("dropped short note: ch={} pitch={} onset={}ms dur={}ms",
                                               key >> 7, n.pitch, n.onset_ms,
                                               n.offset_ms - n.onset_ms));
            return;
        }
        out.notes.notes.push_back(n);
    };
    auto release_sustained = [&](int key, std::uint64_t tick) {
        for (const auto& p : sustained[key]) emit(key, p, tick);
        sustained[key].clear();
    };

    for (const auto& [tick, ev] : timeline) {
        const int ch = ev->channel;
        const bool note_on = ev->kind == EventKind::NoteOn && ev->data2 > 0;
        const bool note_off = ev->kind == EventKind::NoteOff ||
                              (ev->kind == EventKind::NoteOn && ev->data2 == 0);

        if (ch == kPercussionChannel && (note_on || note_off)) {
            if (note_on) {
                const auto ms = clock.to_ms(tick);
                out.notes.notes.push_back(
                    Note{ms, ev->data1, InstrumentClass::Percussion, ms, ev->data2});
            }
            continue;
        }

        const int key = (ch << 7) | ev->data1;
        if (note_on) {
            release_sustained(key, tick);  // re-strike truncates the pedal tail
            held[key].push_back({tick, ev->data2, class_for_program(program[ch])});
        } else if (note_off) {
            if (held[key].empty()) {
                out.warnings.push_back(fmt::format("note_off without note_on: ch={} pitch={} tick={}",
                                                   ch, ev->data1, tick));
                continue;
            }
            const Pending p = held[key].front();
            held[key].pop_front();
            if (pedal[ch]) {
                sustained[key].push_back(p);
            } else {
                emit(key, p, tick);
            }
        } else if (ev->kind == EventKind::ControlChange && ev->data1 == 64) {
            const bool down = ev->data2 >= 64;
            if (pedal[ch] && !down) {
                for (int pitch = 0; pitch < 128; ++pitch) release_sustained((ch << 7) | pitch, tick);
            }
            pedal[ch] = down;
        } else if (ev->kind == EventKind::ProgramChange) {
            program[ch] = ev->data1;
        }
    }

    for (int key = 0; key < kKeys; ++key) {
        for (const auto& p : held[key]) {
            out.warnings.push_back(fmt::format("dangling note_on closed at end: ch={} pitch={} tick={}",
                                               key >> 7, key & 0x7F, p.on_tick));
            emit(key, p, final_tick);
        }
        release_sustained(key, final_tick);
    }

    sort_notes(out.notes);
    return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_vlq(std::vector<std::uint8_t>& out, std::uint64_t v) {
    std::array<std::uint8_t, 10> buf{};
    int n = 0;
    buf[n++] = v & 0x7F;
    while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
    while (n > 0) out.push_back(buf[--n]);
}

void put_chunk(std::vector<std::uint8_t>& out, const char* tag, const std::vector<std::uint8_t>& body) {
    out.insert(out.end(), tag, tag + 4);
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
}

int channel_for_class(InstrumentClass cls) {
    if (is_percussion(cls)) return kPercussionChannel;
    const int c = static_cast<int>(cls);
    return c < kPercussionChannel ? c : c + 1;
}

}  // namespace

std::vector<std::uint8_t> write_midi(const NoteList& notes) {
    constexpr int kDivision = 500;
    constexpr std::int64_t kDrumGateMs = 10;

    std::vector<std::vector<const Note*>> by_class(kNumInstrumentClasses);
    for (const auto& n : notes.notes) by_class[static_cast<std::size_t>(n.instrument_class)].push_back(&n);

    std::vector<std::vector<std::uint8_t>> tracks;
    {
        std::vector<std::uint8_t> t;
        put_vlq(t, 0);
        t.insert(t.end(), {0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20});
        put_vlq(t, 0);
        t.insert(t.end(), {0xFF, 0x2F, 0x00});
        tracks.push_back(std::move(t));
    }

    for (int c = 0; c < kNumInstrumentClasses; ++c) {
        const auto& members = by_class[static_cast<std::size_t>(c)];
        if (members.empty()) continue;
        const auto cls = static_cast<InstrumentClass>(c);
        const auto ch = static_cast<std::uint8_t>(channel_for_class(cls));

        // (tick, is_on, sequence) orders offs before ons at equal ticks and keeps
        // same-key offs in onset order so FIFO matching recovers each note.
        struct Out {
            std::int64_t tick;
            int is_on;
            std::size_t seq;
            std::array<std::uint8_t, 3> msg;
        };
        std::vector<Out> evs;
        evs.reserve(members.size() * 2);
        for (std::size_t i = 0; i < members.size(); ++i) {
            const Note& n = *members[i];
            const std::int64_t off = is_percussion(cls) ? n.onset_ms + kDrumGateMs : n.offset_ms;
            evs.push_back({n.onset_ms, 1, i, {static_cast<std::uint8_t>(0x90 | ch), n.pitch, n.velocity}});
            evs.push_back({off, 0, i, {static_cast<std::uint8_t>(0x80 | ch), n.pitch, 0}});
        }
        std::sort(evs.begin(), evs.end(), [](const Out& a, const Out& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            if (a.is_on != b.is_on) return a.is_on < b.is_on;
            return a.seq < b.seq;
        });

        std::vector<std::uint8_t> t;
        if (!is_percussion(cls)) {
            put_vlq(t, 0);
            t.push_back(static_cast<std::uint8_t>(0xC0 | ch));
            t.push_back(static_cast<std::uint8_t>(representative_program(cls)));
        }
        std::int64_t last = 0;
        for (const auto& e : evs) {
            put_vlq(t, static_cast<std::uint64_t>(e.tick - last));
            last = e.tick;
            t.insert(t.end(), e.msg.begin(), e.msg.end());
        }
        put_vlq(t, 0);
        t.insert(t.end(), {0xFF, 0x2F, 0x00});
        tracks.push_back(std::move(t));
    }

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 1});
    out.push_back(static_cast<std::uint8_t>(tracks.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(tracks.size() & 0xFF));
    out.push_back(kDivision >> 8);
    out.push_back(kDivision & 0xFF);
    for (const auto& t : tracks) put_chunk(out, "MTrk", t);
    return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace ariapipe::midi
