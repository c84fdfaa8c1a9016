#include "qsm/qvol.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace qsm {

namespace {

using nlohmann::json;

void write_f32_raw(const std::string& path, const std::vector<double>& data) {
    std::vector<float> buf(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw io_error("write_qvol: non-finite sample at index " + std::to_string(i));
        buf[i] = static_cast<float>(data[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("write_qvol: cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw io_error("write_qvol: short write to '" + path + "'");
}

void write_header(const std::string& path, const Grid3& g, int channels, Unit unit) {
    json h;
    h["dims"] = g.dims;
    h["voxel_size_mm"] = g.voxel_mm;
    h["dtype"] = "f32";
    h["order"] = "x-fastest";
    h["channels"] = channels;
    h["unit"] = unit_name(unit);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("write_qvol: cannot open '" + path + "' for writing");
    f << h.dump(2) << "\n";
    if (!f) throw io_error("write_qvol: short write to '" + path + "'");
}

std::vector<double> read_f32_raw(const std::string& path, std::size_t expected) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("read_qvol: missing data file '" + path + "'");
    const auto bytes = static_cast<std::size_t>(f.tellg());
    if (bytes != expected * sizeof(float))
        throw io_error("read_qvol: '" + path + "' holds " +
                       std::to_string(bytes / sizeof(float)) + " samples, header expects " +
                       std::to_string(expected));
    f.seekg(0);
    std::vector<float> buf(expected);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(bytes));
    if (!f) throw io_error("read_qvol: short read from '" + path + "'");
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        if (!std::isfinite(buf[i]))
            throw io_error("read_qvol: non-finite sample at index " + std::to_string(i) +
                           " in '" + path + "'");
        out[i] = static_cast<double>(buf[i]);
    }
    return out;
}

} // namespace

std::string qvol_data_path(const std::string& header_path) {
    return header_path + ".raw";
}

void write_qvol(const RealVolume& vol, const std::string& path) {
    write_header(path, vol.grid, 1, vol.unit);
    write_f32_raw(qvol_data_path(path), vol.data);
}

void write_qvol(const TensorField& field, const std::string& path) {
    write_header(path, field.grid, TensorField::kChannels, Unit::ppm);
    write_f32_raw(qvol_data_path(path), field.data);
}

QVolContent read_qvol(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("read_qvol: missing header file '" + path + "'");
    json h;
    try {
        f >> h;
    } catch (const json::exception& e) {
        throw io_error("read_qvol: malformed header '" + path + "': " + e.what());
    }

    Grid3 g;
    try {
        auto dims = h.at("dims").get<std::array<int, 3>>();
        auto vox = h.at("voxel_size_mm").get<std::array<double, 3>>();
        g = Grid3(dims[0], dims[1], dims[2], vox[0], vox[1], vox[2]);
        const std::string dtype = h.at("dtype").get<std::string>();
        if (dtype != "f32")
            throw io_error("read_qvol: unknown dtype '" + dtype + "' in '" + path + "'");
        const std::string order = h.at("order").get<std::string>();
        if (order != "x-fastest")
            throw io_error("read_qvol: unknown sample order '" + order + "'");
    } catch (const json::exception& e) {
        throw io_error("read_qvol: bad header field in '" + path + "': " + e.what());
    }

    const int channels = h.value("channels", 1);
    const Unit unit = unit_from_name(h.value("unit", "dimensionless"));
    const std::string data_path = qvol_data_path(path);

    if (channels == 1) {
        RealVolume vol(g, unit);
        vol.data = read_f32_raw(data_path, g.voxel_count());
        return vol;
    }
    if (channels == TensorField::kChannels) {
        TensorField field(g);
        field.data = read_f32_raw(data_path, g.voxel_count() * TensorField::kChannels);
        return field;
    }
    throw io_error("read_qvol: unsupported channel count " + std::to_string(channels) +
                   " in '" + path + "'");
}

RealVolume read_qvol_real(const std::string& path) {
    auto content = read_qvol(path);
    if (auto* v = std::get_if<RealVolume>(&content)) return std::move(*v);
    throw io_error("read_qvol: '" + path + "' is a 6-channel tensor, expected a scalar volume");
}

TensorField read_qvol_tensor(const std::string& path) {
    auto content = read_qvol(path);
    if (auto* t = std::get_if<TensorField>(&content)) return std::move(*t);
    throw io_error("read_qvol: '" + path + "' is a scalar volume, expected a 6-channel tensor");
}

} // namespace qsm
