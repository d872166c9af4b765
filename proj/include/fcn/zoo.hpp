#pragma once

#include <cstdint>
#include <vector>

#include "fcn/io.hpp"
#include "fcn/net.hpp"

namespace fcn {

// Patch classifier: three conv/pool stages (stride 8 total, receptive field
// 30) and a two-layer FC head over the final 2x2 feature map. Native input
// is 32x32. pool1/pool2/pool3 sit at strides 2/4/8 and are the skip sources.
NetSpec build_toy_classifier(int k);

// Native input extent of the toy classifier.
constexpr int kToyPatch = 32;

// FC rows become conv rows of the same name and geometry; nothing else
// changes. On an exactly-sized input the result computes the very sums the
// FC head does; on larger inputs it slides across every patch at the net's
// stride.
NetSpec convolutionalize(const NetSpec& spec);

// Reshape the fc weight entries of a checkpoint to their conv layout so the
// convolutionalized net can load them. Other entries pass through.
Checkpoint convolutionalize_checkpoint(const NetSpec& spec, const Checkpoint& ckpt);

// Dense predictor from the classifier: convolutionalized trunk, first conv
// padded by 16 so upsampled output always covers the input, a zero-init 1x1
// score conv (k channels), three fixed x2 bilinear deconvs back to input
// resolution, and a final center crop against the input. The upsampling is a
// chain of x2 stages rather than one x8 kernel so that skip attachment can
// splice fusion between stages without changing the function.
NetSpec convert_to_fcn(const NetSpec& classifier, int k);

// Refine a dense predictor with one skip: zero-init 1x1 score conv on
// from_pool, fused (center-crop + sum) into the upsampling chain where the
// strides meet; the x2 deconv feeding that fusion becomes learnable. The new
// score conv starts at zero, so the net's function is unchanged at the
// moment of attachment. from_pool must sit at 1/factor of the stride being
// refined.
NetSpec attach_skip(const NetSpec& net, const std::string& from_pool, int factor);

struct SynthSample {
  Tensor image;     // (1, 3, h, w), values in [0, 1]
  LabelMap labels;  // class ids < k, background 0
  uint64_t seed;    // master seed the sample was drawn from
};

// Images of 1-4 axis-aligned rectangles, discs, and 2-pixel bars in distinct
// class colors over a noisy gray background (Gaussian sigma 0.1, clipped).
// Roughly 3/4 of the pixels are background. Deterministic per seed; at most
// 16 classes (palette size).
std::vector<SynthSample> gen_synth_dataset(int n, int h, int w, int k,
                                           uint64_t seed);

// Sample i of the dataset above, drawn from its own stream, so callers may
// generate out of order or in parallel.
SynthSample gen_synth_sample(int i, int h, int w, int k, uint64_t seed);

}  // namespace fcn
