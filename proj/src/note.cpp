#include "ariapipe/note.hpp"

#include <algorithm>
#include <sstream>

namespace ariapipe {

namespace {

struct ClassRange {
    InstrumentClass cls;
    int first;
    int last;
    std::string_view name;
};

constexpr std::array<ClassRange, kNumPitchedClasses> kRanges{{
    {InstrumentClass::Piano, 0, 7, "piano"},
    {InstrumentClass::ChromaticPercussion, 8, 15, "chromatic"},
    {InstrumentClass::Organ, 16, 23, "organ"},
    {InstrumentClass::Guitar, 24, 31, "guitar"},
    {InstrumentClass::Bass, 32, 39, "bass"},
    {InstrumentClass::Strings, 40, 51, "strings"},
    {InstrumentClass::Voice, 52, 55, "voice"},
    {InstrumentClass::Brass, 56, 63, "brass"},
    {InstrumentClass::Reed, 64, 71, "reed"},
    {InstrumentClass::Pipe, 72, 79, "pipe"},
    {InstrumentClass::Synth, 80, 95, "synth"},
    {InstrumentClass::Other, 96, 127, "other"},
}};

constexpr std::string_view kPercussionName = "drum";

}  // namespace

InstrumentClass class_for_program(int program) noexcept {
    for (const auto& r : kRanges) {
        if (program >= r.first && program <= r.last) return r.cls;
    }
    return InstrumentClass::Other;
}

int representative_program(InstrumentClass cls) noexcept {
    if (is_percussion(cls)) return 0;
    return kRanges[static_cast<std::size_t>(cls)].first;
}

std::string_view class_name(InstrumentClass cls) noexcept {
    if (is_percussion(cls)) return kPercussionName;
    return kRanges[static_cast<std::size_t>(cls)].name;
}

std::optional<InstrumentClass> class_from_name(std::string_view name) noexcept {
    if (name == kPercussionName) return InstrumentClass::Percussion;
    for (const auto& r : kRanges) {
        if (r.name == name) return r.cls;
    }
    return std::nullopt;
}

void sort_notes(NoteList& list) { std::sort(list.notes.begin(), list.notes.end()); }

bool is_sorted(const NoteList& list) {
    return std::is_sorted(list.notes.begin(), list.notes.end());
}

std::string instrument_class_table() {
    std::ostringstream out;
    for (const auto& r : kRanges) {
        out << static_cast<int>(r.cls) << '\t' << r.name << '\t' << r.first << '-' << r.last
            << '\n';
    }
    out << static_cast<int>(InstrumentClass::Percussion) << '\t' << kPercussionName
        << "\tchannel10\n";
    return out.str();
}

}  // namespace ariapipe
