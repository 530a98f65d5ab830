#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ariapipe/note.hpp"

namespace ariapipe::midi {

inline constexpr std::uint32_t kDefaultTempo = 500000;  // us per quarter

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& what);

    /// Byte offset into the input at which decoding failed.
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

enum class EventKind : std::uint8_t {
    NoteOff,
    NoteOn,
    PolyPressure,
    ControlChange,
    ProgramChange,
    ChannelPressure,
    PitchBend,
    Meta,
    SysEx,
};

struct Event {
    std::uint64_t tick = 0;  // absolute
    EventKind kind = EventKind::Meta;
    std::uint8_t channel = 0;
    std::uint8_t data1 = 0;
    std::uint8_t data2 = 0;
    std::uint8_t meta_type = 0;
    std::vector<std::uint8_t> payload;  // meta and sysex bodies, kept opaque

    friend bool operator==(const Event&, const Event&) = default;
};

using Track = std::vector<Event>;

struct TempoEntry {
    std::uint64_t tick = 0;
    std::uint32_t us_per_quarter = kDefaultTempo;

    friend bool operator==(const TempoEntry&, const TempoEntry&) = default;
};

using TempoMap = std::vector<TempoEntry>;

struct MidiDocument {
    int format = 0;
    int division = 0;  // ticks per quarter note
    std::vector<Track> tracks;
    TempoMap tempo_map;  // strictly ascending ticks, always starts at tick 0
};

/// Decodes an SMF byte stream. Handles running status, meta and sysex events.
/// Throws ParseError on a malformed header, truncated chunk or SMPTE division.
MidiDocument parse_midi(std::span<const std::uint8_t> bytes);

/// Tick to milliseconds, accumulated exactly over tempo regions and rounded
/// once to the nearest millisecond (ties away from zero).
std::int64_t ticks_to_ms(std::uint64_t tick, const TempoMap& tempo_map, int division);

struct Resolution {
    NoteList notes;
    std::vector<std::string> warnings;
};

/// Pitched notes whose resolved duration is below this are dropped with a warning.
inline constexpr std::int64_t kMinNoteDurationMs = 10;

Resolution resolve_notes(const MidiDocument& doc);

/// Emits SMF-1 at division 500 and tempo 500000, so one tick is one
/// millisecond. Track 0 carries the tempo; each instrument class present gets
/// its own track and channel.
std::vector<std::uint8_t> write_midi(const NoteList& notes);

std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace ariapipe::midi
