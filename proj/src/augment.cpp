#include "ariapipe/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ariapipe/rng.hpp"

namespace ariapipe {

void AugmentConfig::validate() const {
    if (max_transpose < 0) throw std::invalid_argument("max_transpose must be >= 0");
    if (max_velocity_jitter < 0) throw std::invalid_argument("max_velocity_jitter must be >= 0");
    if (!(tempo_min > 0.0) || !(tempo_max >= tempo_min) || !std::isfinite(tempo_max)) {
        throw std::invalid_argument("tempo range must satisfy 0 < min <= max");
    }
}

NoteList transpose(NoteList notes, int semitones) {
    if (semitones == 0) return notes;
    for (auto& n : notes.notes) {
        if (n.percussive()) continue;
        int p = n.pitch + semitones;
        while (p > 127) p -= 12;
        while (p < 0) p += 12;
        n.pitch = static_cast<std::uint8_t>(p);
    }
    sort_notes(notes);
    return notes;
}

NoteList stretch_tempo(NoteList notes, double factor) {
    if (!(factor > 0.0)) throw std::invalid_argument("tempo factor must be positive");
    if (factor == 1.0) return notes;
    for (auto& n : notes.notes) {
        n.onset_ms = std::llround(static_cast<double>(n.onset_ms) * factor);
        if (n.percussive()) {
            n.offset_ms = n.onset_ms;
        } else {
            n.offset_ms = std::max(std::llround(static_cast<double>(n.offset_ms) * factor),
                                   static_cast<long long>(n.onset_ms + 1));
        }
    }
    sort_notes(notes);
    return notes;
}

NoteList jitter_velocity(NoteList notes, int delta) {
    if (delta == 0) return notes;
    for (auto& n : notes.notes) {
        if (n.percussive()) continue;
        n.velocity = static_cast<std::uint8_t>(std::clamp(n.velocity + delta, 1, 127));
    }
    sort_notes(notes);
    return notes;
}

AugmentDraw draw_augmentation(const AugmentConfig& config, std::uint64_t stream_id) {
    config.validate();
    const CounterRng rng(config.seed, stream_id);
    AugmentDraw d;
    d.transpose = static_cast<int>(rng.uniform_int(0, -config.max_transpose, config.max_transpose));
    d.tempo_factor = config.tempo_min == config.tempo_max
                         ? config.tempo_min
                         : rng.uniform_real(1, config.tempo_min, config.tempo_max);
    d.velocity_delta =
        static_cast<int>(rng.uniform_int(2, -config.max_velocity_jitter, config.max_velocity_jitter));
    return d;
}

NoteList random_augment(NoteList notes, const AugmentConfig& config, std::uint64_t stream_id) {
    const auto d = draw_augmentation(config, stream_id);
    notes = transpose(std::move(notes), d.transpose);
    notes = stretch_tempo(std::move(notes), d.tempo_factor);
    return jitter_velocity(std::move(notes), d.velocity_delta);
}

}  // namespace ariapipe
