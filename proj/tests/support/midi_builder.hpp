#pragma once
// Minimal SMF encoder used only by tests and the fixture generator. It shares
// no code with the library parser or writer.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace testmidi {

using Bytes = std::vector<std::uint8_t>;

inline void put_vlq(Bytes& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = v & 0x7F;
    while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
    while (n) out.push_back(buf[--n]);
}

inline void put_be(Bytes& out, std::uint32_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Track {
public:
    Track& note_on(std::uint32_t tick, int ch, int pitch, int vel) { return channel(tick, 0x90, ch, pitch, vel); }
    // Off as 0x80, or as note-on with velocity 0.
    Track& note_off(std::uint32_t tick, int ch, int pitch, bool zero_velocity_on = false) {
        return zero_velocity_on ? channel(tick, 0x90, ch, pitch, 0) : channel(tick, 0x80, ch, pitch, 64);
    }
    Track& note(std::uint32_t on, std::uint32_t off, int ch, int pitch, int vel) {
        note_on(on, ch, pitch, vel);
        return note_off(off, ch, pitch);
    }
    Track& control(std::uint32_t tick, int ch, int cc, int value) { return channel(tick, 0xB0, ch, cc, value); }
    Track& pedal(std::uint32_t tick, int ch, bool down) { return control(tick, ch, 64, down ? 127 : 0); }
    Track& program(std::uint32_t tick, int ch, int prog) {
        events_.push_back({tick, seq_++, {static_cast<std::uint8_t>(0xC0 | ch), static_cast<std::uint8_t>(prog)}});
        return *this;
    }
    Track& tempo(std::uint32_t tick, std::uint32_t us_per_quarter) {
        Bytes b{0xFF, 0x51, 0x03};
        put_be(b, us_per_quarter, 3);
        events_.push_back({tick, seq_++, b});
        return *this;
    }
    Track& text(std::uint32_t tick, const std::string& s) {
        Bytes b{0xFF, 0x01};
        put_vlq(b, static_cast<std::uint32_t>(s.size()));
        b.insert(b.end(), s.begin(), s.end());
        events_.push_back({tick, seq_++, b});
        return *this;
    }
    Track& sysex(std::uint32_t tick, const Bytes& data) {
        Bytes b{0xF0};
        put_vlq(b, static_cast<std::uint32_t>(data.size()));
        b.insert(b.end(), data.begin(), data.end());
        events_.push_back({tick, seq_++, b});
        return *this;
    }

    Bytes encode(bool running_status) const {
        auto evs = events_;
        std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) { return a.tick < b.tick; });
        Bytes body;
        std::uint32_t now = 0;
        int status = -1;
        for (const auto& e : evs) {
            put_vlq(body, e.tick - now);
            now = e.tick;
            const std::uint8_t s = e.bytes[0];
            if (s >= 0xF0) {
                status = -1;
                body.insert(body.end(), e.bytes.begin(), e.bytes.end());
            } else if (running_status && s == status) {
                body.insert(body.end(), e.bytes.begin() + 1, e.bytes.end());
            } else {
                status = s;
                body.insert(body.end(), e.bytes.begin(), e.bytes.end());
            }
        }
        body.insert(body.end(), {0x00, 0xFF, 0x2F, 0x00});
        Bytes out{'M', 'T', 'r', 'k'};
        put_be(out, static_cast<std::uint32_t>(body.size()), 4);
        out.insert(out.end(), body.begin(), body.end());
        return out;
    }

private:
    struct Ev {
        std::uint32_t tick;
        std::uint64_t seq;
        Bytes bytes;
    };
    Track& channel(std::uint32_t tick, int kind, int ch, int a, int b) {
        events_.push_back({tick, seq_++,
                           {static_cast<std::uint8_t>(kind | ch), static_cast<std::uint8_t>(a),
                            static_cast<std::uint8_t>(b)}});
        return *this;
    }
    std::vector<Ev> events_;
    std::uint64_t seq_ = 0;
};

inline Bytes smf(int format, int division, const std::vector<Track>& tracks, bool running_status = false) {
    Bytes out{'M', 'T', 'h', 'd', 0, 0, 0, 6};
    put_be(out, static_cast<std::uint32_t>(format), 2);
    put_be(out, static_cast<std::uint32_t>(tracks.size()), 2);
    put_be(out, static_cast<std::uint32_t>(division), 2);
    for (const auto& t : tracks) {
        const auto b = t.encode(running_status);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

}  // namespace testmidi
