#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ariapipe {

// 12 pitched classes condensed from the 128 GM programs, plus percussion.
enum class InstrumentClass : std::uint8_t {
    Piano = 0,
    ChromaticPercussion,
    Organ,
    Guitar,
    Bass,
    Strings,
    Voice,
    Brass,
    Reed,
    Pipe,
    Synth,
    Other,
    Percussion,
};

inline constexpr int kNumPitchedClasses = 12;
inline constexpr int kNumInstrumentClasses = 13;
inline constexpr int kPercussionChannel = 9;  // channel 10, zero-based

/// Maps a GM program number (0-127) to its instrument class.
InstrumentClass class_for_program(int program) noexcept;

/// First program of the class's range. Used when writing MIDI.
int representative_program(InstrumentClass cls) noexcept;

std::string_view class_name(InstrumentClass cls) noexcept;
std::optional<InstrumentClass> class_from_name(std::string_view name) noexcept;

inline constexpr bool is_percussion(InstrumentClass cls) noexcept {
    return cls == InstrumentClass::Percussion;
}

/// A resolved note with absolute millisecond timing.
///
/// Field order defines the canonical NoteList ordering: onset, then pitch,
/// then instrument class, with offset and velocity as final tie-breaks so the
/// order is total.
struct Note {
    std::int64_t onset_ms = 0;
    std::uint8_t pitch = 0;
    InstrumentClass instrument_class = InstrumentClass::Piano;
    std::int64_t offset_ms = 0;
    std::uint8_t velocity = 1;

    friend auto operator<=>(const Note&, const Note&) = default;

    std::int64_t duration_ms() const noexcept { return offset_ms - onset_ms; }
    bool percussive() const noexcept { return is_percussion(instrument_class); }
};

struct NoteList {
    std::vector<Note> notes;
    std::string source_id;

    friend bool operator==(const NoteList&, const NoteList&) = default;

    bool empty() const noexcept { return notes.empty(); }
    std::size_t size() const noexcept { return notes.size(); }
};

/// Restores the ordering invariant after a transform.
void sort_notes(NoteList& list);
bool is_sorted(const NoteList& list);

/// Machine-readable instrument-class table, one line per class:
/// "<index>\t<name>\t<first_program>-<last_program>" (percussion: "channel10").
std::string instrument_class_table();

}  // namespace ariapipe
