#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sf/config.hpp"
#include "sf/dataset.hpp"
#include "sf/fields.hpp"
#include "sf/objectives.hpp"
#include "sf/renderer.hpp"

namespace sf {

// Runtime training variants mirroring the ablation axes: encoding choice,
// residual density, and constant-vs-annealed content weight.
struct AblationSpec {
    FineInput fine_input = FineInput::HashAndEc;
    bool use_residual = true;
    double constant_lambda = -1.0;  // < 0 keeps the annealed schedule
};

// Flags: no-residual-density | pe-instead-of-hash | ec-only |
// constant-lambda=<v>. Conflicting or unknown flags throw.
AblationSpec ablation_mode(const std::vector<std::string>& flags);
AblationSpec ablation_from_config(const RunConfig& cfg);

std::unique_ptr<HierarchicalField> build_field(const RunConfig& cfg, const AblationSpec& ab,
                                               const AxisBounds& bounds, std::uint64_t seed);

// Field checkpoints carry "meta.*" arrays describing the architecture and
// bounds, so rendering needs nothing but the file.
void save_field_checkpoint(const std::string& path, const HierarchicalField& field,
                           bool coarse_only);
struct LoadedField {
    std::unique_ptr<HierarchicalField> field;
    bool has_fine = false;
};
LoadedField load_field_checkpoint(const std::string& path);

// Per-iteration learning rate under "iter:factor" decay events.
std::vector<double> lr_sequence(double base_lr,
                                const std::vector<std::pair<std::int64_t, double>>& events,
                                std::int64_t iters);

struct TrainCoarseResult {
    std::unique_ptr<HierarchicalField> field;
    std::vector<LossReport> log;
    // Coarse snapshots at every checkpoint event plus the final state.
    std::vector<NamedArrays> checkpoints;
};

// Stage 1: Adam on the reconstruction loss over random ray batches.
// When out_dir is non-empty, writes coarse.sfck, numbered checkpoints and
// the loss log there. A non-finite loss aborts after writing the last good
// checkpoint.
TrainCoarseResult train_coarse(const SceneDataset& dataset, const RunConfig& cfg,
                               std::uint64_t seed, const std::string& out_dir);

// Mean held-out PSNR of the given mode against the dataset's images.
double heldout_psnr(const HierarchicalField& field, const SceneDataset& dataset,
                    RenderMode mode, const RunConfig& cfg);

struct TrainStyleResult {
    std::unique_ptr<HierarchicalField> field;
    std::vector<LossReport> log;
    std::vector<Camera> content_cams;    // train poses first, then novel poses
    std::vector<Array> content_renders;  // coarse renders at those poses
    std::vector<std::uint64_t> pose_seeds;
};

// Stage 2: the coarse field stays frozen (verified by parameter hashing every
// step); fine MLP + hash tables optimize the content/style objective with
// annealed lambda via deferred image-space backpropagation.
TrainStyleResult train_style(const std::string& coarse_checkpoint, const Array& style_image,
                             const SceneDataset& dataset, const RunConfig& cfg,
                             std::uint64_t seed, const std::string& out_dir);

// Independent per-image stylization baseline: optimizes pixels directly with
// the same losses and schedule. Used by consistency comparisons.
Array stylize_image_2d(const Array& content_image, const Array& style_image,
                       const FeatureExtractor& extractor, const RunConfig& cfg,
                       std::uint64_t seed);

}  // namespace sf
