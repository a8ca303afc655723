#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mffa/image.hpp"

namespace mffa {

// Placement of the instrument in a synthetic frame relative to the source
// frame: translation in pixels, rotation in degrees (counterclockwise about
// the patch centroid, in image coordinates).
struct MovingParams {
    double dx = 0;
    double dy = 0;
    double dtheta = 0;
};

struct SynthesisRanges {
    double translate_min = 15.0;  // per-axis magnitude, sign drawn separately
    double translate_max = 40.0;
    double rotate_min = -30.0;
    double rotate_max = 30.0;

    void validate() const;
};

// Raised as NoInstrument when a source mask has no instrument pixels.
class NoInstrumentError : public ValidationError {
public:
    NoInstrumentError() : ValidationError("no instrument pixels in mask") {}
};

// Independent draws for the first and last frames; magnitudes uniform in
// [translate_min, translate_max] with independent uniform signs per axis,
// rotation uniform in [rotate_min, rotate_max].
std::pair<MovingParams, MovingParams> sample_endpoint_params(Rng& rng,
                                                             const SynthesisRanges& ranges);

// Piecewise-linear per component with knots at frame 1 (= first), the center
// frame C = floor((N+1)/2) (forced to zero motion), and frame N (= last).
std::vector<MovingParams> interpolate_params(const MovingParams& first, const MovingParams& last,
                                             int n);

// Tight bounding-box crop of the instrument with its local mask.
struct InstrumentPatch {
    int x0 = 0;  // bounding box origin in the source frame
    int y0 = 0;
    Image img;
    Mask mask;
    double centroid_x = 0;  // mask centroid in patch-local coordinates
    double centroid_y = 0;
};

InstrumentPatch extract_instrument(const Image& frame, const Mask& mask);

// Fills the masked region by iterative neighbor-mean diffusion until the
// largest per-pixel change drops below 0.5 intensity levels (500 sweeps max).
// Unmasked pixels are untouched.
Image inpaint(const Image& frame, const Mask& mask);

// Rotates the patch about its centroid, translates it, and composites it over
// the background; the mask undergoes the identical transform with a 0.5
// threshold after warping.
std::pair<Image, Mask> transform_paste(const Image& background, const InstrumentPatch& patch,
                                       const MovingParams& params);

// Ordered frames with optional per-frame ground truth.
struct FrameSequence {
    std::vector<Image> frames;
    std::vector<std::optional<Mask>> masks;

    int size() const { return static_cast<int>(frames.size()); }
};

// Densely labeled synthetic sequence from one labeled frame: the source pair
// sits untouched at the center; every other frame is the transformed
// instrument over the inpainted background.
FrameSequence synthesize_sequence(const Image& frame, const Mask& label, int n, Rng& rng,
                                  const SynthesisRanges& ranges);

}  // namespace mffa
