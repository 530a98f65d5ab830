#pragma once

#include <cstdint>

#include "ariapipe/note.hpp"

namespace ariapipe {

struct AugmentConfig {
    int max_transpose = 5;           // semitones
    double tempo_min = 0.8;          // multiplicative factor bounds
    double tempo_max = 1.2;
    int max_velocity_jitter = 10;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when bounds are negative or inverted.
    void validate() const;
};

/// Shifts pitched notes; anything leaving [0, 127] is folded back by octaves.
NoteList transpose(NoteList notes, int semitones);

/// Scales onsets and offsets by factor, rounding to the nearest millisecond.
/// Pitched notes keep at least 1 ms of duration.
NoteList stretch_tempo(NoteList notes, double factor);

/// Shifts pitched-note velocities, clamped to [1, 127].
NoteList jitter_velocity(NoteList notes, int delta);

struct AugmentDraw {
    int transpose = 0;
    double tempo_factor = 1.0;
    int velocity_delta = 0;
};

AugmentDraw draw_augmentation(const AugmentConfig& config, std::uint64_t stream_id);

/// Applies all three transforms with parameters drawn from (seed, stream_id).
NoteList random_augment(NoteList notes, const AugmentConfig& config, std::uint64_t stream_id);

}  // namespace ariapipe
