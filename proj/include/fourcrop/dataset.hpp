#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "fourcrop/image.hpp"

namespace fourcrop::data {

struct DatasetIndex {
    std::string root;
    std::vector<std::string> class_names;        // lexicographic directory order
    std::vector<std::vector<std::string>> files; // per class, sorted paths
    std::size_t class_count() const { return class_names.size(); }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& f : files) n += f.size();
        return n;
    }
};

// Classes are the immediate subdirectories of root; images are recognized by
// extension (png/jpg/jpeg/bmp, case-insensitive). Classes below min_per_class
// images are rejected: they cannot be split 80/10/10.
DatasetIndex scan_dataset(const std::string& root, std::size_t min_per_class = 10);

struct Sample {
    std::string path;
    std::size_t class_index;
};

struct Split {
    std::vector<Sample> train, valid, test;
    std::uint64_t seed = 0;
};

// Per class: seeded shuffle, then |train| = round(0.8 n), |valid| = round(0.1 n),
// remainder to test (computed in integer arithmetic, half rounds up).
Split split_dataset(const DatasetIndex& index, std::uint64_t seed);

// CSV rows `path,class_index,partition` for train, valid, test in order
void write_split_manifest(const Split& split, const std::string& path);

// Inverse of write_split_manifest; evaluation reads the recorded split back
// instead of re-deriving one that might disagree.
Split read_split_manifest(const std::string& path);

// Decoded+resized images keyed by (path, size), FIFO-evicted at a byte cap.
class ImageCache {
public:
    explicit ImageCache(std::size_t max_bytes = std::size_t(1) << 30) : max_bytes_(max_bytes) {}

    const Tensor<float>& get(const std::string& path, std::size_t target);
    std::size_t bytes() const { return bytes_; }

private:
    std::size_t max_bytes_, bytes_ = 0;
    std::unordered_map<std::string, Tensor<float>> map_;
    std::deque<std::string> order_;
};

// One epoch over a split part: reproducible shuffle per (seed, epoch), short
// final batch, optional per-sample augmentation (train only, by construction
// of the caller). Augmentation draws are seeded per (seed, epoch, sample) so
// they do not depend on batch size or shuffle order.
class BatchStream {
public:
    BatchStream(const std::vector<Sample>& samples, std::size_t batch_size,
                std::size_t input_size, std::uint64_t seed, std::size_t epoch, bool augment_on,
                img::AugmentConfig augment_cfg, ImageCache* cache);

    // fills a (B,S,S,3) tensor and B labels; false once the epoch is done
    bool next(Tensor<float>& images, std::vector<std::size_t>& labels);
    std::size_t batch_count() const;

private:
    const std::vector<Sample>& samples_;
    std::size_t batch_size_, input_size_;
    std::uint64_t seed_;
    std::size_t epoch_;
    bool augment_on_;
    img::AugmentConfig augment_cfg_;
    ImageCache* cache_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

// Class k is a distinct hue striped at a class-specific orientation and
// frequency, plus seeded pixel noise; same seed gives byte-identical trees.
void generate_synthetic_dataset(std::size_t num_classes, std::size_t per_class,
                                std::uint64_t seed, const std::string& out_dir,
                                std::size_t image_size = 224);

} // namespace fourcrop::data
