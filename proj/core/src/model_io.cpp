#include "specarray/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "specarray/errors.hpp"

namespace specarray {

namespace {

constexpr std::uint16_t kModelVersion = 1;

const std::vector<std::pair<std::string, std::uint8_t>>& layer_tags() {
    static const std::vector<std::pair<std::string, std::uint8_t>> tags = {
        {"conv2d", 1},   {"relu", 2},  {"maxpool", 3}, {"batchnorm", 4},
        {"flatten", 5},  {"dropout", 6}, {"dense", 7},
    };
    return tags;
}

std::uint8_t tag_for(const std::string& type) {
    for (const auto& [name, tag] : layer_tags())
        if (name == type) return tag;
    throw std::logic_error("model_io: unknown layer type " + type);
}

void put_u16(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_blob(std::ostream& out, const std::vector<double>& blob) {
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    std::vector<float> f(blob.size());
    for (std::size_t i = 0; i < blob.size(); ++i) f[i] = static_cast<float>(blob[i]);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(f.data()),
                  static_cast<std::streamsize>(f.size() * sizeof(float)));
    } else {
        for (float v : f) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
}

std::vector<double> read_blob(std::istream& in) {
    const std::uint32_t n = get_u32(in);
    std::vector<float> f(n);
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(f.data()),
                static_cast<std::streamsize>(f.size() * sizeof(float)));
    } else {
        for (float& v : f) {
            const std::uint32_t bits = get_u32(in);
            std::memcpy(&v, &bits, 4);
        }
    }
    return {f.begin(), f.end()};
}

} // namespace

void write_model(const std::string& path, Network& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_model: cannot open " + path);
    out.write("SPNN", 4);
    put_u16(out, kModelVersion);
    out.put(static_cast<char>(net.arch));
    put_u32(out, static_cast<std::uint32_t>(net.in_shape.rows));
    put_u32(out, static_cast<std::uint32_t>(net.in_shape.cols));
    put_u32(out, static_cast<std::uint32_t>(net.in_shape.channels));
    put_u32(out, static_cast<std::uint32_t>(net.num_classes));
    put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        out.put(static_cast<char>(tag_for(layer->type())));
        const std::vector<int> dims = layer->dims();
        out.put(static_cast<char>(dims.size()));
        for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (const auto& layer : net.layers)
        for (const std::vector<double>* blob : layer->state_blobs())
            write_blob(out, *blob);
    if (!out) throw std::runtime_error("write_model: short write to " + path);
}

Network read_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError(path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SPNN", 4) != 0)
        throw std::runtime_error("read_model: " + path + " is not an SPNN file");
    const std::uint16_t version = get_u16(in);
    if (version != kModelVersion)
        throw std::runtime_error("read_model: unsupported SPNN version " +
                                 std::to_string(version));
    const auto arch = static_cast<NetArch>(in.get());
    TensorShape shape;
    shape.rows = static_cast<int>(get_u32(in));
    shape.cols = static_cast<int>(get_u32(in));
    shape.channels = static_cast<int>(get_u32(in));
    const int classes = static_cast<int>(get_u32(in));
    const std::uint32_t layer_count = get_u32(in);

    Network net = build_network(arch, shape, classes, 0);
    if (net.layers.size() != layer_count)
        throw std::runtime_error("read_model: layer table length mismatch in " + path);
    for (const auto& layer : net.layers) {
        const auto tag = static_cast<std::uint8_t>(in.get());
        const auto ndims = static_cast<std::size_t>(in.get());
        std::vector<int> dims(ndims);
        for (int& d : dims) d = static_cast<int>(get_u32(in));
        if (tag != tag_for(layer->type()) || dims != layer->dims())
            throw std::runtime_error("read_model: layer table mismatch in " + path);
    }
    std::vector<std::vector<double>> state;
    for (const auto& layer : net.layers)
        for (std::size_t i = 0; i < layer->state_blobs().size(); ++i)
            state.push_back(read_blob(in));
    if (!in) throw std::runtime_error("read_model: truncated file " + path);
    net.load_state(state);
    return net;
}

void write_history(const std::string& path, const TrainResult& result) {
    nlohmann::ordered_json j;
    j["best_epoch"] = result.best_epoch;
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const EpochStats& e : result.history) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"val_loss", e.val_loss},
                          {"val_accuracy", e.val_accuracy},
                          {"learning_rate", e.learning_rate}});
    }
    j["epochs"] = std::move(epochs);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_history: cannot open " + path);
    out << j.dump(2) << '\n';
}

} // namespace specarray
