#pragma once

// Reader and writer for the C3D motion-capture container: 512-byte blocks,
// a header block, a parameter section and interleaved point/analog frames.
// Only Intel (little-endian) processor files are handled.

#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mocap/error.hpp"

namespace mocap::c3d {

static_assert(std::endian::native == std::endian::little, "byte handling assumes a little-endian host");

enum class DataFormat { Integer, Float };

using Point = std::array<double, 3>;

struct C3dFile {
    int point_count = 0;
    int frame_count = 0;
    double frame_rate = 0.0;
    std::vector<std::string> labels;
    // frame-major: points[frame * point_count + marker]
    std::vector<Point> points;
    double scale_factor = 1.0;
    DataFormat data_format = DataFormat::Float;

    const Point& at(int frame, int marker) const {
        return points[static_cast<std::size_t>(frame) * static_cast<std::size_t>(point_count) +
                      static_cast<std::size_t>(marker)];
    }
    Point& at(int frame, int marker) {
        return points[static_cast<std::size_t>(frame) * static_cast<std::size_t>(point_count) +
                      static_cast<std::size_t>(marker)];
    }
};

inline constexpr std::size_t kBlockSize = 512;
inline constexpr std::uint8_t kParameterKey = 0x50;
inline constexpr std::uint8_t kProcessorIntel = 84;
inline constexpr std::uint8_t kProcessorDec = 85;
inline constexpr std::uint8_t kProcessorMips = 86;

inline void validate(const C3dFile& file) {
    if (file.frame_count < 1) throw Error(ErrorCode::InvalidFile, "frame_count must be >= 1");
    if (file.point_count < 1) throw Error(ErrorCode::InvalidFile, "point_count must be >= 1");
    if (file.labels.size() != static_cast<std::size_t>(file.point_count))
        throw Error(ErrorCode::InvalidFile, "label count differs from point_count");
    if (file.points.size() != static_cast<std::size_t>(file.frame_count) * static_cast<std::size_t>(file.point_count))
        throw Error(ErrorCode::InvalidFile, "point array size differs from frame_count * point_count");
    if (!(file.frame_rate > 0.0)) throw Error(ErrorCode::InvalidFile, "frame_rate must be positive");
}

namespace detail {

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t size() const { return bytes_.size(); }

    void require(std::size_t offset, std::size_t count, const char* what) const {
        if (offset > bytes_.size() || count > bytes_.size() - offset)
            throw Error(ErrorCode::TruncatedData, std::string("stream ends inside ") + what);
    }
    std::uint8_t u8(std::size_t offset) const {
        require(offset, 1, "byte field");
        return bytes_[offset];
    }
    std::int8_t i8(std::size_t offset) const { return static_cast<std::int8_t>(u8(offset)); }
    std::uint16_t u16(std::size_t offset) const {
        require(offset, 2, "16-bit field");
        return static_cast<std::uint16_t>(bytes_[offset] | (bytes_[offset + 1] << 8));
    }
    std::int16_t i16(std::size_t offset) const { return static_cast<std::int16_t>(u16(offset)); }
    float f32(std::size_t offset) const {
        require(offset, 4, "32-bit field");
        std::uint32_t raw = static_cast<std::uint32_t>(bytes_[offset]) |
                            (static_cast<std::uint32_t>(bytes_[offset + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes_[offset + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes_[offset + 3]) << 24);
        return std::bit_cast<float>(raw);
    }
    std::span<const std::uint8_t> slice(std::size_t offset, std::size_t count) const {
        require(offset, count, "record");
        return bytes_.subspan(offset, count);
    }

private:
    std::span<const std::uint8_t> bytes_;
};

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void i8(std::int8_t v) { out_.push_back(static_cast<std::uint8_t>(v)); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v & 0xff));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
    void f32(float v) {
        auto raw = std::bit_cast<std::uint32_t>(v);
        for (int shift = 0; shift < 32; shift += 8) out_.push_back(static_cast<std::uint8_t>((raw >> shift) & 0xff));
    }
    void text(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void pad_to_block() {
        while (out_.size() % kBlockSize != 0) out_.push_back(0);
    }
    void patch_u16(std::size_t offset, std::uint16_t v) {
        out_[offset] = static_cast<std::uint8_t>(v & 0xff);
        out_[offset + 1] = static_cast<std::uint8_t>(v >> 8);
    }
    std::size_t size() const { return out_.size(); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

struct Parameter {
    int type = 0; // -1 char, 1 byte, 2 int16, 4 float
    std::vector<int> dims;
    std::vector<std::uint8_t> data;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }
    std::optional<double> scalar() const {
        if (data.empty()) return std::nullopt;
        ByteReader r(data);
        switch (type) {
        case 1: return static_cast<double>(r.u8(0));
        case 2: return data.size() >= 2 ? std::optional<double>(r.i16(0)) : std::nullopt;
        case 4: return data.size() >= 4 ? std::optional<double>(r.f32(0)) : std::nullopt;
        default: return std::nullopt;
        }
    }
    std::vector<std::string> strings() const {
        std::vector<std::string> out;
        if (type != -1 || dims.empty()) return out;
        const auto width = static_cast<std::size_t>(dims[0]);
        std::size_t count = 1;
        for (std::size_t i = 1; i < dims.size(); ++i) count *= static_cast<std::size_t>(dims[i]);
        if (dims.size() == 1) count = 1;
        for (std::size_t i = 0; i < count && (i + 1) * width <= data.size(); ++i) {
            std::string s(data.begin() + static_cast<std::ptrdiff_t>(i * width),
                          data.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
            while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
            out.push_back(std::move(s));
        }
        return out;
    }
};

inline std::string upper(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

// Keyed by "GROUP:NAME" in upper case.
using ParameterTable = std::map<std::string, Parameter>;

inline ParameterTable read_parameters(const ByteReader& r, std::size_t start) {
    std::map<int, std::string> group_names;
    std::vector<std::pair<int, std::pair<std::string, Parameter>>> pending;

    std::size_t pos = start + 4;
    const std::size_t limit = r.size();
    while (pos < limit) {
        const int name_len = std::abs(static_cast<int>(r.i8(pos)));
        if (name_len == 0) break;
        const int id = r.i8(pos + 1);
        auto name_bytes = r.slice(pos + 2, static_cast<std::size_t>(name_len));
        std::string name = upper(std::string(name_bytes.begin(), name_bytes.end()));
        const std::size_t offset_pos = pos + 2 + static_cast<std::size_t>(name_len);
        const std::uint16_t next = r.u16(offset_pos);
        if (id < 0) {
            group_names[-id] = name;
        } else if (id > 0) {
            Parameter p;
            p.type = r.i8(offset_pos + 2);
            const int ndims = r.u8(offset_pos + 3);
            for (int d = 0; d < ndims; ++d) p.dims.push_back(r.u8(offset_pos + 4 + static_cast<std::size_t>(d)));
            const std::size_t elem = static_cast<std::size_t>(std::abs(p.type));
            const std::size_t count = ndims == 0 ? 1 : p.element_count();
            auto payload = r.slice(offset_pos + 4 + static_cast<std::size_t>(ndims), elem * count);
            p.data.assign(payload.begin(), payload.end());
            pending.push_back({id, {name, std::move(p)}});
        }
        if (next == 0) break;
        pos = offset_pos + next;
    }

    ParameterTable table;
    for (auto& [gid, entry] : pending) {
        auto it = group_names.find(gid);
        const std::string group = it == group_names.end() ? std::to_string(gid) : it->second;
        table[group + ":" + entry.first] = std::move(entry.second);
    }
    return table;
}

inline const Parameter* find(const ParameterTable& table, const std::string& key) {
    auto it = table.find(key);
    return it == table.end() ? nullptr : &it->second;
}

} // namespace detail

inline C3dFile parse(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    if (bytes.size() < kBlockSize) throw Error(ErrorCode::TruncatedData, "stream shorter than one header block");
    if (r.u8(1) != kParameterKey) throw Error(ErrorCode::MalformedHeader, "header byte 2 is not 0x50");
    const std::size_t param_block = r.u8(0);
    if (param_block < 1) throw Error(ErrorCode::MalformedHeader, "parameter block pointer is zero");
    const std::size_t param_start = (param_block - 1) * kBlockSize;
    r.require(param_start, 4, "parameter section header");

    const std::uint8_t processor = r.u8(param_start + 3);
    if (processor != kProcessorIntel) {
        const char* name = processor == kProcessorDec ? "DEC" : processor == kProcessorMips ? "SGI/MIPS" : "unknown";
        throw Error(ErrorCode::UnsupportedEncoding,
                    std::string("processor type ") + std::to_string(processor) + " (" + name + ") is not Intel");
    }

    const auto params = detail::read_parameters(r, param_start);

    C3dFile file;
    file.point_count = r.u16(2);
    const int analog_words = r.u16(4);
    const int first_frame = r.u16(6);
    const int last_frame = r.u16(8);
    double scale = r.f32(12);
    std::size_t data_block = r.u16(16);
    file.frame_rate = r.f32(20);

    if (auto* p = detail::find(params, "POINT:USED"); p && p->scalar()) {
        const int used = static_cast<int>(static_cast<std::uint16_t>(static_cast<std::int16_t>(*p->scalar())));
        if (used > 0) file.point_count = used;
    }
    if (auto* p = detail::find(params, "POINT:SCALE"); p && p->scalar()) scale = *p->scalar();
    if (auto* p = detail::find(params, "POINT:RATE"); p && p->scalar() && *p->scalar() > 0) file.frame_rate = *p->scalar();
    if (auto* p = detail::find(params, "POINT:DATA_START"); p && p->scalar() && *p->scalar() > 0)
        data_block = static_cast<std::size_t>(*p->scalar());

    file.frame_count = last_frame - first_frame + 1;
    if (file.frame_count < 1) {
        if (auto* p = detail::find(params, "POINT:FRAMES"); p && p->scalar())
            file.frame_count = static_cast<std::uint16_t>(static_cast<std::int16_t>(*p->scalar()));
    }
    if (file.point_count < 1) throw Error(ErrorCode::InvalidFile, "file declares no 3D points");
    if (file.frame_count < 1) throw Error(ErrorCode::InvalidFile, "file declares no frames");
    if (data_block < 1) throw Error(ErrorCode::MalformedHeader, "data start block is zero");

    file.data_format = scale < 0.0 ? DataFormat::Float : DataFormat::Integer;
    file.scale_factor = std::abs(scale);
    if (file.data_format == DataFormat::Integer && file.scale_factor == 0.0)
        throw Error(ErrorCode::MalformedHeader, "integer-coded point data with zero scale factor");

    for (const char* key : {"POINT:LABELS", "POINT:LABELS2", "POINT:LABELS3", "POINT:LABELS4"}) {
        if (auto* p = detail::find(params, key)) {
            auto names = p->strings();
            file.labels.insert(file.labels.end(), names.begin(), names.end());
        }
    }
    file.labels.resize(static_cast<std::size_t>(file.point_count));
    for (std::size_t i = 0; i < file.labels.size(); ++i)
        if (file.labels[i].empty()) file.labels[i] = "M" + std::to_string(i);

    const std::size_t word = file.data_format == DataFormat::Float ? 4 : 2;
    const std::size_t frame_bytes = (static_cast<std::size_t>(file.point_count) * 4 + static_cast<std::size_t>(analog_words)) * word;
    const std::size_t data_start = (data_block - 1) * kBlockSize;
    r.require(data_start, frame_bytes * static_cast<std::size_t>(file.frame_count), "point data");

    file.points.resize(static_cast<std::size_t>(file.frame_count) * static_cast<std::size_t>(file.point_count));
    for (int f = 0; f < file.frame_count; ++f) {
        const std::size_t base = data_start + static_cast<std::size_t>(f) * frame_bytes;
        for (int m = 0; m < file.point_count; ++m) {
            const std::size_t rec = base + static_cast<std::size_t>(m) * 4 * word;
            Point& pt = file.at(f, m);
            for (std::size_t k = 0; k < 3; ++k) {
                if (file.data_format == DataFormat::Float)
                    pt[k] = r.f32(rec + k * word);
                else
                    pt[k] = static_cast<double>(r.i16(rec + k * word)) * file.scale_factor;
            }
            // residual/camera word is discarded
        }
    }
    return file;
}

namespace detail {

inline void write_parameter(ByteWriter& w, int group_id, const std::string& name, int type,
                            const std::vector<int>& dims, const std::vector<std::uint8_t>& data) {
    w.i8(static_cast<std::int8_t>(name.size()));
    w.i8(static_cast<std::int8_t>(group_id));
    w.text(name);
    const std::size_t body = 2 + 1 + 1 + dims.size() + data.size() + 1;
    w.u16(static_cast<std::uint16_t>(body));
    w.i8(static_cast<std::int8_t>(type));
    w.u8(static_cast<std::uint8_t>(dims.size()));
    for (int d : dims) w.u8(static_cast<std::uint8_t>(d));
    for (auto b : data) w.u8(b);
    w.u8(0); // description length
}

inline void write_group(ByteWriter& w, int group_id, const std::string& name) {
    w.i8(static_cast<std::int8_t>(name.size()));
    w.i8(static_cast<std::int8_t>(-group_id));
    w.text(name);
    w.u16(3);
    w.u8(0);
}

inline std::vector<std::uint8_t> int16_bytes(std::int16_t v) {
    return {static_cast<std::uint8_t>(v & 0xff), static_cast<std::uint8_t>((static_cast<std::uint16_t>(v) >> 8) & 0xff)};
}

inline std::vector<std::uint8_t> float_bytes(float v) {
    auto raw = std::bit_cast<std::uint32_t>(v);
    return {static_cast<std::uint8_t>(raw & 0xff), static_cast<std::uint8_t>((raw >> 8) & 0xff),
            static_cast<std::uint8_t>((raw >> 16) & 0xff), static_cast<std::uint8_t>((raw >> 24) & 0xff)};
}

} // namespace detail

inline std::vector<std::uint8_t> write(const C3dFile& file) {
    validate(file);
    if (file.point_count > 65535 || file.frame_count > 65535)
        throw Error(ErrorCode::InvalidFile, "point or frame count exceeds the 16-bit header fields");
    for (const auto& label : file.labels)
        if (label.size() > 255) throw Error(ErrorCode::InvalidFile, "marker label longer than 255 bytes");

    const bool is_float = file.data_format == DataFormat::Float;
    // the scale is stored as a 32-bit float, so quantize with the value a reader will see
    const double scale = static_cast<double>(static_cast<float>(file.scale_factor > 0.0 ? file.scale_factor : 1.0));
    const float header_scale = static_cast<float>(is_float ? -scale : scale);

    // Parameter section, assembled first so the data block index is known.
    detail::ByteWriter params;
    params.u8(0);
    params.u8(kParameterKey);
    params.u8(0); // block count, patched below
    params.u8(kProcessorIntel);
    detail::write_group(params, 1, "POINT");
    detail::write_parameter(params, 1, "USED", 2, {}, detail::int16_bytes(static_cast<std::int16_t>(file.point_count)));
    detail::write_parameter(params, 1, "SCALE", 4, {}, detail::float_bytes(header_scale));
    detail::write_parameter(params, 1, "RATE", 4, {}, detail::float_bytes(static_cast<float>(file.frame_rate)));
    detail::write_parameter(params, 1, "FRAMES", 2, {}, detail::int16_bytes(static_cast<std::int16_t>(file.frame_count)));
    const std::size_t data_start_patch = params.size() + 2 + 10 + 2 + 2; // offset of the DATA_START payload
    detail::write_parameter(params, 1, "DATA_START", 2, {}, detail::int16_bytes(0));

    std::size_t label_width = 4;
    for (const auto& label : file.labels) label_width = std::max(label_width, label.size());
    for (std::size_t chunk = 0; chunk * 255 < file.labels.size(); ++chunk) {
        const std::size_t begin = chunk * 255;
        const std::size_t end = std::min(file.labels.size(), begin + 255);
        std::vector<std::uint8_t> data;
        for (std::size_t i = begin; i < end; ++i) {
            std::string padded = file.labels[i];
            padded.resize(label_width, ' ');
            data.insert(data.end(), padded.begin(), padded.end());
        }
        const std::string name = chunk == 0 ? "LABELS" : "LABELS" + std::to_string(chunk + 1);
        detail::write_parameter(params, 1, name, -1, {static_cast<int>(label_width), static_cast<int>(end - begin)}, data);
    }
    detail::write_group(params, 2, "ANALOG");
    detail::write_parameter(params, 2, "USED", 2, {}, detail::int16_bytes(0));
    params.u8(0); // terminator
    params.u8(0);
    params.pad_to_block();
    auto param_bytes = params.take();
    const std::size_t param_blocks = param_bytes.size() / kBlockSize;
    param_bytes[2] = static_cast<std::uint8_t>(param_blocks);
    const auto data_block = static_cast<std::uint16_t>(2 + param_blocks);
    param_bytes[data_start_patch] = static_cast<std::uint8_t>(data_block & 0xff);
    param_bytes[data_start_patch + 1] = static_cast<std::uint8_t>(data_block >> 8);

    detail::ByteWriter out;
    out.u8(2);
    out.u8(kParameterKey);
    out.u16(static_cast<std::uint16_t>(file.point_count));
    out.u16(0); // analog measurements per frame
    out.u16(1); // first frame
    out.u16(static_cast<std::uint16_t>(file.frame_count));
    out.u16(10); // max interpolation gap
    out.f32(header_scale);
    out.u16(data_block);
    out.u16(0); // analog samples per frame
    out.f32(static_cast<float>(file.frame_rate));
    out.pad_to_block();
    auto bytes = out.take();
    bytes.insert(bytes.end(), param_bytes.begin(), param_bytes.end());

    detail::ByteWriter data;
    for (int f = 0; f < file.frame_count; ++f) {
        for (int m = 0; m < file.point_count; ++m) {
            const Point& pt = file.at(f, m);
            if (is_float) {
                for (double v : pt) data.f32(static_cast<float>(v));
                data.f32(0.0f);
            } else {
                for (double v : pt) {
                    const double q = std::round(v / scale);
                    if (!(q >= -32768.0 && q <= 32767.0))
                        throw Error(ErrorCode::InvalidFile, "coordinate does not fit the integer encoding at this scale");
                    data.i16(static_cast<std::int16_t>(q));
                }
                data.i16(0);
            }
        }
    }
    data.pad_to_block();
    auto payload = data.take();
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    return bytes;
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline C3dFile load(const std::string& path) {
    const auto bytes = read_bytes(path);
    return parse(bytes);
}

inline void save(const std::string& path, const C3dFile& file) {
    const auto bytes = write(file);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace mocap::c3d
