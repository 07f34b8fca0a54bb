#include "specarray/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "specarray/errors.hpp"
#include "specarray/parallel.hpp"

namespace specarray {

namespace {

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

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
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

float get_f32(std::istream& in) {
    const std::uint32_t bits = get_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

constexpr std::uint16_t kFormatVersion = 1;

nlohmann::ordered_json array_to_json(const ArrayConfig& a) {
    return {{"num_elements", a.num_elements},
            {"spacing_wavelengths", a.spacing_wavelengths},
            {"grid_min_deg", a.grid_min_deg},
            {"grid_max_deg", a.grid_max_deg},
            {"grid_step_deg", a.grid_step_deg}};
}

ArrayConfig array_from_json(const nlohmann::json& j) {
    ArrayConfig a;
    a.num_elements = j.at("num_elements").get<int>();
    a.spacing_wavelengths = j.at("spacing_wavelengths").get<double>();
    a.grid_min_deg = j.at("grid_min_deg").get<double>();
    a.grid_max_deg = j.at("grid_max_deg").get<double>();
    a.grid_step_deg = j.at("grid_step_deg").get<double>();
    return a;
}

nlohmann::ordered_json synthesis_to_json(const SynthesisParams& p) {
    return {{"snapshots", p.snapshots},
            {"noise_power", p.noise_power},
            {"soi_power", p.soi_power},
            {"interference_power", p.interference_power},
            {"onset_min", p.onset_min},
            {"onset_max", p.onset_max}};
}

SynthesisParams synthesis_from_json(const nlohmann::json& j) {
    SynthesisParams p;
    p.snapshots = j.at("snapshots").get<int>();
    p.noise_power = j.at("noise_power").get<double>();
    p.soi_power = j.at("soi_power").get<double>();
    p.interference_power = j.at("interference_power").get<double>();
    p.onset_min = j.at("onset_min").get<int>();
    p.onset_max = j.at("onset_max").get<int>();
    return p;
}

} // namespace

void Dataset::validate() const {
    if (m < 1 || t < 1 || channels != 2)
        throw std::domain_error("Dataset: bad per-example dims");
    if (payload.size() != example_stride() * labels.size())
        throw std::domain_error("Dataset: payload size mismatch");
}

RealTensor Dataset::tensor(int i) const {
    RealTensor out(m, t, channels);
    const float* src = payload.data() + example_stride() * static_cast<std::size_t>(i);
    for (std::size_t k = 0; k < out.data.size(); ++k)
        out.data[k] = static_cast<double>(src[k]);
    return out;
}

ReceivedArray Dataset::received(int i) const {
    ReceivedArray z;
    z.samples = from_real_tensor(tensor(i));
    z.meta.task = task;
    z.meta.label = labels[static_cast<std::size_t>(i)];
    z.meta.activation_time = task == Task::doa ? t / 2 : -1;
    return z;
}

LabeledExamples Dataset::to_labeled(int num_classes) const {
    LabeledExamples ex;
    ex.shape = TensorShape{m, t, channels};
    ex.num_classes = num_classes;
    ex.data = payload;
    ex.labels.assign(labels.begin(), labels.end());
    ex.validate();
    return ex;
}

namespace {

Dataset generate(Task task, const ArrayConfig& array, const SynthesisParams& params,
                 int count, std::uint64_t seed) {
    array.validate();
    params.validate();
    if (count < 1) throw std::domain_error("generate: count must be positive");

    Dataset ds;
    ds.task = task;
    ds.m = array.num_elements;
    ds.t = params.snapshots;
    ds.array = array;
    ds.synthesis = params;
    ds.seed = seed;
    ds.labels.resize(static_cast<std::size_t>(count));
    ds.payload.resize(ds.example_stride() * static_cast<std::size_t>(count));

    const int grid_n = array.grid_size();
    for (int i = 0; i < count; ++i)
        ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(
            task == Task::detection ? i % 2 : i % grid_n);

    parallel_chunks(static_cast<std::size_t>(count), kReductionChunks,
                    [&](int, std::size_t b0, std::size_t b1) {
        for (std::size_t i = b0; i < b1; ++i) {
            Rng rng(derive_seed(seed, i));
            const int label = ds.labels[i];
            const ReceivedArray z =
                task == Task::detection
                    ? synthesize_detection_example(array, params, label, rng)
                    : synthesize_doa_example(array, params,
                                             array.grid_angle(label), rng);
            const RealTensor tensor = to_real_tensor(z.samples);
            float* dst = ds.payload.data() + ds.example_stride() * i;
            for (std::size_t k = 0; k < tensor.data.size(); ++k)
                dst[k] = static_cast<float>(tensor.data[k]);
        }
    });
    return ds;
}

} // namespace

Dataset generate_detection_dataset(const ArrayConfig& array,
                                   const SynthesisParams& params, int count,
                                   std::uint64_t seed) {
    return generate(Task::detection, array, params, count, seed);
}

Dataset generate_doa_dataset(const ArrayConfig& array, const SynthesisParams& params,
                             int count, std::uint64_t seed) {
    return generate(Task::doa, array, params, count, seed);
}

void write_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
    out.write("ARRD", 4);
    put_u16(out, kFormatVersion);
    out.put(static_cast<char>(ds.task));
    put_u32(out, static_cast<std::uint32_t>(ds.size()));
    put_u32(out, static_cast<std::uint32_t>(ds.m));
    put_u32(out, static_cast<std::uint32_t>(ds.t));
    put_u32(out, static_cast<std::uint32_t>(ds.channels));
    for (std::uint16_t l : ds.labels) put_u16(out, l);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(ds.payload.data()),
                  static_cast<std::streamsize>(ds.payload.size() * sizeof(float)));
    } else {
        for (float v : ds.payload) put_f32(out, v);
    }
    if (!out) throw std::runtime_error("write_dataset: short write to " + path);

    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["task"] = ds.task == Task::detection ? "det" : "doa";
    j["count"] = ds.size();
    j["array"] = array_to_json(ds.array);
    j["synthesis"] = synthesis_to_json(ds.synthesis);
    j["seed"] = ds.seed;
    std::ofstream side(path + ".json", std::ios::binary);
    if (!side) throw std::runtime_error("write_dataset: cannot open " + path + ".json");
    side << j.dump(2) << '\n';
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError(path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ARRD", 4) != 0)
        throw std::runtime_error("read_dataset: " + path + " is not an ARRD file");
    const std::uint16_t version = get_u16(in);
    if (version != kFormatVersion)
        throw std::runtime_error("read_dataset: unsupported ARRD version " +
                                 std::to_string(version));
    Dataset ds;
    ds.task = static_cast<Task>(in.get());
    const std::uint32_t n = get_u32(in);
    ds.m = static_cast<int>(get_u32(in));
    ds.t = static_cast<int>(get_u32(in));
    ds.channels = static_cast<int>(get_u32(in));
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ds.labels[i] = get_u16(in);
    ds.payload.resize(ds.example_stride() * n);
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(ds.payload.data()),
                static_cast<std::streamsize>(ds.payload.size() * sizeof(float)));
    } else {
        for (float& v : ds.payload) v = get_f32(in);
    }
    if (!in) throw std::runtime_error("read_dataset: truncated file " + path);

    std::ifstream side(path + ".json", std::ios::binary);
    if (!side) throw MissingArtifactError(path + ".json");
    try {
        nlohmann::json j;
        side >> j;
        ds.array = array_from_json(j.at("array"));
        ds.synthesis = synthesis_from_json(j.at("synthesis"));
        ds.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("read_dataset: malformed sidecar for " + path + ": " + e.what());
    }
    ds.validate();
    return ds;
}

} // namespace specarray
