#include "san/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "san/errors.hpp"
#include "san/theory.hpp"

namespace san {

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw format_error(path + ": truncated at offset " + std::to_string(offset));
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& image_path, const std::string& label_path) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) throw io_error("cannot open " + image_path);
    std::uint32_t magic = read_u32_be(img, image_path, 0);
    if (magic != kImageMagic) {
        throw format_error(image_path + ": bad image magic at offset 0 (expected 0x00000803)");
    }
    std::uint32_t count = read_u32_be(img, image_path, 4);
    std::uint32_t rows = read_u32_be(img, image_path, 8);
    std::uint32_t cols = read_u32_be(img, image_path, 12);

    std::ifstream lab(label_path, std::ios::binary);
    if (!lab) throw io_error("cannot open " + label_path);
    std::uint32_t lmagic = read_u32_be(lab, label_path, 0);
    if (lmagic != kLabelMagic) {
        throw format_error(label_path + ": bad label magic at offset 0 (expected 0x00000801)");
    }
    std::uint32_t lcount = read_u32_be(lab, label_path, 4);
    if (count != lcount) {
        throw format_error("image count " + std::to_string(count) + " vs label count " +
                           std::to_string(lcount) + " (offsets 4)");
    }

    LabeledDataset ds;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::size_t offset = 16 + static_cast<std::size_t>(i) * pixels.size();
        if (!img.read(reinterpret_cast<char*>(pixels.data()),
                      static_cast<std::streamsize>(pixels.size()))) {
            throw format_error(image_path + ": truncated at offset " + std::to_string(offset));
        }
        Tensor t({rows, cols, 1});
        for (std::size_t j = 0; j < pixels.size(); ++j) t[j] = pixels[j] / 255.0;
        ds.samples.emplace_back(std::move(t));
    }
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        char c;
        if (!lab.read(&c, 1)) {
            throw format_error(label_path + ": truncated at offset " + std::to_string(8 + i));
        }
        int y = static_cast<unsigned char>(c);
        ds.labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    ds.class_count = static_cast<std::size_t>(max_label) + 1;
    if (ds.samples.empty()) throw format_error(image_path + ": empty dataset");
    return ds;
}

void write_idx(const std::vector<Tensor>& images, const std::vector<int>& labels,
               const std::string& image_path, const std::string& label_path) {
    if (images.size() != labels.size()) {
        throw contract_error("write_idx: " + std::to_string(images.size()) + " images vs " +
                             std::to_string(labels.size()) + " labels");
    }
    if (images.empty()) throw contract_error("write_idx: empty dataset");
    std::size_t rows = images[0].shape()[0], cols = images[0].shape()[1];

    std::ofstream img(image_path, std::ios::binary);
    if (!img) throw io_error("cannot open " + image_path + " for writing");
    write_u32_be(img, kImageMagic);
    write_u32_be(img, static_cast<std::uint32_t>(images.size()));
    write_u32_be(img, static_cast<std::uint32_t>(rows));
    write_u32_be(img, static_cast<std::uint32_t>(cols));
    for (const Tensor& t : images) {
        if (t.shape()[0] != rows || t.shape()[1] != cols) {
            throw contract_error("write_idx: inconsistent image shapes");
        }
        for (std::size_t j = 0; j < rows * cols; ++j) {
            double v = std::clamp(t[j], 0.0, 1.0);
            unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
            img.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    if (!img) throw io_error("write failed for " + image_path);

    std::ofstream lab(label_path, std::ios::binary);
    if (!lab) throw io_error("cannot open " + label_path + " for writing");
    write_u32_be(lab, kLabelMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) {
        unsigned char b = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!lab) throw io_error("write failed for " + label_path);
}

LabeledDataset gen_blob_sets(const BlobSpec& spec, std::size_t count, std::uint64_t seed) {
    if (spec.centers.empty()) throw contract_error("gen_blob_sets: no class centers");
    if (spec.n_range.first < 1 || spec.n_range.second < spec.n_range.first) {
        throw contract_error("gen_blob_sets: invalid cardinality range");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> card(spec.n_range.first, spec.n_range.second);
    std::normal_distribution<double> noise(0.0, spec.spread);

    LabeledDataset ds;
    ds.class_count = spec.centers.size();
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t cls = i % spec.centers.size();  // exact class balance
        std::size_t n = card(rng);
        Tensor pts({n, 2});
        for (std::size_t j = 0; j < n; ++j) {
            pts.at(j, 0) = spec.centers[cls][0] + noise(rng);
            pts.at(j, 1) = spec.centers[cls][1] + noise(rng);
        }
        ds.samples.emplace_back(FeatureSet(std::move(pts)));
        ds.labels.push_back(static_cast<int>(cls));
    }
    return ds;
}

LabeledDataset gen_ring_vs_blob(std::pair<std::size_t, std::size_t> n_range, std::size_t count,
                                std::uint64_t seed) {
    if (n_range.first < 1 || n_range.second < n_range.first) {
        throw contract_error("gen_ring_vs_blob: invalid cardinality range");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> card(n_range.first, n_range.second);
    std::normal_distribution<double> blob(0.0, 0.5);
    std::normal_distribution<double> radial(0.0, 0.2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);

    LabeledDataset ds;
    ds.class_count = 2;
    for (std::size_t i = 0; i < count; ++i) {
        int cls = static_cast<int>(i % 2);
        std::size_t n = card(rng);
        Tensor pts({n, 2});
        for (std::size_t j = 0; j < n; ++j) {
            if (cls == 0) {
                pts.at(j, 0) = blob(rng);
                pts.at(j, 1) = blob(rng);
            } else {
                double a = angle(rng);
                double r = 2.0 + radial(rng);
                pts.at(j, 0) = r * std::cos(a);
                pts.at(j, 1) = r * std::sin(a);
            }
        }
        ds.samples.emplace_back(FeatureSet(std::move(pts)));
        ds.labels.push_back(cls);
    }
    return ds;
}

namespace {

// Catmull-Rom cubic kernel, a = -0.5
double cubic_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

// align-corners source coordinate for a destination index
double src_coord(std::size_t dst, std::size_t dst_size, std::size_t src_size) {
    if (dst_size <= 1) return 0.0;
    return static_cast<double>(dst) * static_cast<double>(src_size - 1) /
           static_cast<double>(dst_size - 1);
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t size) {
    if (i < 0) return 0;
    if (i >= static_cast<std::ptrdiff_t>(size)) return size - 1;
    return static_cast<std::size_t>(i);
}

}  // namespace

Tensor resize_image(const Tensor& image, std::size_t new_h, std::size_t new_w,
                    ResizeMethod method) {
    if (image.rank() != 3) {
        throw dimension_error("resize_image: expected an HxWxC tensor, got " +
                              shape_string(image.shape()));
    }
    if (new_h < 1 || new_w < 1) {
        throw contract_error("resize_image: target dimensions must be >= 1");
    }
    std::size_t h = image.shape()[0], w = image.shape()[1], ch = image.shape()[2];
    if (new_h == h && new_w == w) return image;

    Tensor out({new_h, new_w, ch});
    auto px = [&](std::size_t r, std::size_t c, std::size_t k) {
        return image[(r * w + c) * ch + k];
    };
    for (std::size_t r = 0; r < new_h; ++r) {
        double sy = src_coord(r, new_h, h);
        for (std::size_t c = 0; c < new_w; ++c) {
            double sx = src_coord(c, new_w, w);
            for (std::size_t k = 0; k < ch; ++k) {
                double v = 0.0;
                if (method == ResizeMethod::bilinear) {
                    std::size_t y0 = clamp_index(static_cast<std::ptrdiff_t>(std::floor(sy)), h);
                    std::size_t x0 = clamp_index(static_cast<std::ptrdiff_t>(std::floor(sx)), w);
                    std::size_t y1 = std::min(y0 + 1, h - 1);
                    std::size_t x1 = std::min(x0 + 1, w - 1);
                    double ty = sy - std::floor(sy);
                    double tx = sx - std::floor(sx);
                    v = (1 - ty) * ((1 - tx) * px(y0, x0, k) + tx * px(y0, x1, k)) +
                        ty * ((1 - tx) * px(y1, x0, k) + tx * px(y1, x1, k));
                } else {
                    std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(sy));
                    std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(sx));
                    for (std::ptrdiff_t dy = -1; dy <= 2; ++dy) {
                        double wy = cubic_weight(sy - static_cast<double>(y0 + dy));
                        if (wy == 0.0) continue;
                        std::size_t yy = clamp_index(y0 + dy, h);
                        for (std::ptrdiff_t dx = -1; dx <= 2; ++dx) {
                            double wx = cubic_weight(sx - static_cast<double>(x0 + dx));
                            if (wx == 0.0) continue;
                            v += wy * wx * px(yy, clamp_index(x0 + dx, w), k);
                        }
                    }
                }
                out[(r * new_w + c) * ch + k] = v;
            }
        }
    }
    return out;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "epoch,split,loss,accuracy\n";
    char buf[64];
    for (const MetricsRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.loss, r.accuracy);
        out << r.epoch << ',' << to_string(r.split) << ',' << buf << '\n';
    }
    if (!out) throw io_error("write failed for " + path);
}

void write_profile_csv(const ProfileReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "b,f\n";
    char buf[80];
    for (std::size_t i = 0; i < report.bias_grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", report.bias_grid[i], report.values[i]);
        out << buf << '\n';
    }
    if (!out) throw io_error("write failed for " + path);
}

void write_collision_csv(const CollisionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "M,pairs,collisions,min_distance\n";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", report.min_pair_distance);
    out << report.neuron_count << ',' << report.pairs_tested << ',' << report.collisions << ','
        << buf << '\n';
    if (!out) throw io_error("write failed for " + path);
}

}  // namespace san
