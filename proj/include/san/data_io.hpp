#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "san/aggregation.hpp"
#include "san/tensor.hpp"

namespace san {

// An input sample is either a raw feature set or an image tensor {H,W,C}
// destined for a convolutional extractor.
using Sample = std::variant<FeatureSet, Tensor>;

struct LabeledDataset {
    std::vector<Sample> samples;
    std::vector<int> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return samples.size(); }
};

enum class Split { train, valid, test };

std::string to_string(Split s);

struct MetricsRecord {
    std::size_t epoch = 0;
    Split split = Split::train;
    double loss = 0.0;
    double accuracy = 0.0;
};

// IDX container (big-endian, magics 0x00000803 images / 0x00000801 labels).
// Pixels are scaled to [0,1]; images become {H,W,1} tensors.
LabeledDataset load_idx(const std::string& image_path, const std::string& label_path);

// Writes byte images (values in [0,1], quantized back to 0..255) and labels
// in IDX format. Counterpart of load_idx, used for fixtures and packaging.
void write_idx(const std::vector<Tensor>& images, const std::vector<int>& labels,
               const std::string& image_path, const std::string& label_path);

struct BlobSpec {
    std::vector<std::array<double, 2>> centers;  // one class per center
    double spread = 0.5;
    std::pair<std::size_t, std::size_t> n_range{5, 20};
};

// Synthetic set-classification tasks with seeded-random cardinality.
LabeledDataset gen_blob_sets(const BlobSpec& spec, std::size_t count, std::uint64_t seed);
LabeledDataset gen_ring_vs_blob(std::pair<std::size_t, std::size_t> n_range, std::size_t count,
                                std::uint64_t seed);

enum class ResizeMethod { bilinear, bicubic };

// Align-corners resampling of an {H,W,C} image. Bicubic uses the
// Catmull-Rom kernel (a = -0.5) with edge clamping.
Tensor resize_image(const Tensor& image, std::size_t new_h, std::size_t new_w,
                    ResizeMethod method);

// header `epoch,split,loss,accuracy`, reals with 6 decimals, input order
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

struct ProfileReport;
struct CollisionReport;

// header `b,f`, one row per grid point
void write_profile_csv(const ProfileReport& report, const std::string& path);
// header `M,pairs,collisions,min_distance`, single row
void write_collision_csv(const CollisionReport& report, const std::string& path);

}  // namespace san
