#include "fourcrop/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>

#include "fourcrop/errors.hpp"
#include "fourcrop/rng.hpp"

namespace fourcrop::data {

namespace fs = std::filesystem;

namespace {

// distinct salt streams so shuffle and augmentation never share draws
constexpr std::uint64_t kShuffleStream = 0x5u;
constexpr std::uint64_t kAugmentStream = 0xAu;

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

} // namespace

DatasetIndex scan_dataset(const std::string& root, std::size_t min_per_class) {
    fs::path base(root);
    if (!fs::exists(base)) throw DataError("dataset root '" + root + "' does not exist");
    if (!fs::is_directory(base)) throw DataError("dataset root '" + root + "' is not a directory");

    DatasetIndex index;
    index.root = root;
    for (const auto& entry : fs::directory_iterator(base)) {
        if (!entry.is_directory()) continue;
        index.class_names.push_back(entry.path().filename().string());
    }
    if (index.class_names.empty())
        throw DataError("dataset root '" + root + "' contains no class directories");
    std::sort(index.class_names.begin(), index.class_names.end());

    index.files.resize(index.class_names.size());
    for (std::size_t c = 0; c < index.class_names.size(); ++c) {
        auto& list = index.files[c];
        for (const auto& entry : fs::directory_iterator(base / index.class_names[c])) {
            if (entry.is_regular_file() && has_image_extension(entry.path()))
                list.push_back(entry.path().string());
        }
        std::sort(list.begin(), list.end());
        if (list.empty())
            throw DataError("class directory '" + index.class_names[c] + "' contains no images");
        if (list.size() < min_per_class)
            throw DataError("class '" + index.class_names[c] + "' has only " +
                            std::to_string(list.size()) + " images; need at least " +
                            std::to_string(min_per_class));
    }
    return index;
}

Split split_dataset(const DatasetIndex& index, std::uint64_t seed) {
    Split split;
    split.seed = seed;
    for (std::size_t c = 0; c < index.class_count(); ++c) {
        std::vector<std::string> files = index.files[c];
        std::mt19937_64 eng(derive_seed(seed, c));
        std::shuffle(files.begin(), files.end(), eng);

        const std::size_t n = files.size();
        const std::size_t n_train = (8 * n + 5) / 10; // round(0.8 n), half up
        const std::size_t n_valid = (n + 5) / 10;     // round(0.1 n), half up
        if (n_valid < 1 || n_train + n_valid >= n)
            throw DataError("class '" + index.class_names[c] + "' has too few images (" +
                            std::to_string(n) + ") to fill every partition");
        for (std::size_t i = 0; i < n; ++i) {
            auto& part = i < n_train            ? split.train
                         : i < n_train + n_valid ? split.valid
                                                 : split.test;
            part.push_back({files[i], c});
        }
    }
    return split;
}

void write_split_manifest(const Split& split, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "path,class_index,partition\n";
    auto dump = [&](const std::vector<Sample>& part, const char* name) {
        for (const auto& s : part) {
            if (s.path.find(',') != std::string::npos)
                throw DataError("image path contains a comma, cannot write manifest: " + s.path);
            out << s.path << ',' << s.class_index << ',' << name << '\n';
        }
    };
    dump(split.train, "train");
    dump(split.valid, "valid");
    dump(split.test, "test");
    if (!out) throw DataError("failed writing manifest '" + path + "'");
}

Split read_split_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open split manifest '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "path,class_index,partition")
        throw DataError("'" + path + "' is not a split manifest (bad header)");

    Split split;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::size_t first = line.find(','), second = line.rfind(',');
        if (first == std::string::npos || second == first)
            throw DataError("malformed manifest row " + std::to_string(row) + " in '" + path +
                            "'");
        Sample s;
        s.path = line.substr(0, first);
        try {
            s.class_index = std::stoul(line.substr(first + 1, second - first - 1));
        } catch (const std::exception&) {
            throw DataError("bad class index at manifest row " + std::to_string(row) + " in '" +
                            path + "'");
        }
        const std::string part = line.substr(second + 1);
        if (part == "train") split.train.push_back(std::move(s));
        else if (part == "valid") split.valid.push_back(std::move(s));
        else if (part == "test") split.test.push_back(std::move(s));
        else
            throw DataError("unknown partition '" + part + "' at manifest row " +
                            std::to_string(row) + " in '" + path + "'");
    }
    if (split.train.empty() && split.valid.empty() && split.test.empty())
        throw DataError("split manifest '" + path + "' lists no samples");
    return split;
}

const Tensor<float>& ImageCache::get(const std::string& path, std::size_t target) {
    const std::string key = path + "#" + std::to_string(target);
    auto it = map_.find(key);
    if (it != map_.end()) return it->second;

    Tensor<float> image = img::load_image(path, target);
    const std::size_t cost = image.size() * sizeof(float);
    while (!order_.empty() && bytes_ + cost > max_bytes_) {
        auto victim = map_.find(order_.front());
        order_.pop_front();
        if (victim != map_.end()) {
            bytes_ -= victim->second.size() * sizeof(float);
            map_.erase(victim);
        }
    }
    bytes_ += cost;
    order_.push_back(key);
    return map_.emplace(key, std::move(image)).first->second;
}

BatchStream::BatchStream(const std::vector<Sample>& samples, std::size_t batch_size,
                         std::size_t input_size, std::uint64_t seed, std::size_t epoch,
                         bool augment_on, img::AugmentConfig augment_cfg, ImageCache* cache)
    : samples_(samples),
      batch_size_(batch_size),
      input_size_(input_size),
      seed_(seed),
      epoch_(epoch),
      augment_on_(augment_on),
      augment_cfg_(augment_cfg),
      cache_(cache) {
    if (samples.empty()) throw DataError("batch stream over an empty sample list");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    order_.resize(samples.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::mt19937_64 eng(derive_seed(seed, kShuffleStream, epoch));
    std::shuffle(order_.begin(), order_.end(), eng);
}

std::size_t BatchStream::batch_count() const {
    return (samples_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchStream::next(Tensor<float>& images, std::vector<std::size_t>& labels) {
    if (pos_ >= order_.size()) return false;
    const std::size_t b = std::min(batch_size_, order_.size() - pos_);
    images = Tensor<float>({b, input_size_, input_size_, 3});
    labels.assign(b, 0);

    ImageCache local(0); // fallback when the caller shares no cache
    ImageCache& cache = cache_ ? *cache_ : local;
    for (std::size_t j = 0; j < b; ++j) {
        const std::size_t idx = order_[pos_ + j];
        const Sample& s = samples_[idx];
        Tensor<float> image = cache.get(s.path, input_size_);
        if (augment_on_) {
            std::mt19937_64 eng(derive_seed(derive_seed(seed_, kAugmentStream, epoch_), idx));
            image = img::augment(image, augment_cfg_, eng);
        }
        std::copy(image.data(), image.data() + image.size(),
                  images.data() + j * image.size());
        labels[j] = s.class_index;
    }
    pos_ += b;
    return true;
}

} // namespace fourcrop::data
