#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/gaussian_model.hpp"
#include "vbgs/image.hpp"
#include "vbgs/sde.hpp"

namespace vbgs {

// ---------------------------------------------------------------------------
// Raw band-sequential images with a text sidecar (<payload>.hdr).

inline std::string header_path(const std::string& payload) { return payload + ".hdr"; }

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

/// Little-endian cursor over a byte buffer; throws IoError on overrun.
class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

    std::size_t remaining() const { return buf_.size() - pos_; }
    std::size_t position() const { return pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) throw IoError(what_ + ": truncated data");
    }
    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        const auto v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    const std::vector<std::uint8_t>& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::size_t parse_positive(const std::string& v, const std::string& key, const std::string& path) {
    std::size_t used = 0;
    long long n = 0;
    try {
        n = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || n <= 0) throw IoError(path + ": header field " + key + " must be a positive integer");
    return static_cast<std::size_t>(n);
}

}  // namespace detail

inline ImageMeta read_image_header(const std::string& payload_path) {
    const std::string path = header_path(payload_path);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open image header " + path);
    std::map<std::string, std::string> fields;
    std::string line;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError(path + ": malformed header line '" + line + "'");
        fields[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    for (const char* key : {"width", "height", "bands", "dtype", "range", "order"})
        if (!fields.count(key)) throw IoError(path + ": missing header field " + key);
    if (fields["dtype"] != "f32") throw IoError(path + ": unsupported dtype " + fields["dtype"]);
    if (fields["order"] != "bsq") throw IoError(path + ": unsupported order " + fields["order"]);
    ImageMeta meta;
    meta.width = detail::parse_positive(fields["width"], "width", path);
    meta.height = detail::parse_positive(fields["height"], "height", path);
    meta.bands = detail::parse_positive(fields["bands"], "bands", path);
    const std::string& range = fields["range"];
    const auto comma = range.find(',');
    if (comma == std::string::npos) throw IoError(path + ": range must be '<lo>,<hi>'");
    try {
        meta.range.lo = std::stod(range.substr(0, comma));
        meta.range.hi = std::stod(range.substr(comma + 1));
    } catch (const std::exception&) {
        throw IoError(path + ": range must be '<lo>,<hi>'");
    }
    if (!(meta.range.lo < meta.range.hi)) throw IoError(path + ": range lower bound must be below upper bound");
    return meta;
}

inline MultiBandImage read_image(const std::string& path) {
    const ImageMeta meta = read_image_header(path);
    const auto bytes = detail::read_file(path);
    if (bytes.size() != 4 * meta.value_count())
        throw IoError(path + ": payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(4 * meta.value_count()));
    detail::ByteReader reader(bytes, path);
    std::vector<double> data(meta.value_count());
    for (double& v : data) v = reader.f32();
    MultiBandImage img(meta, std::move(data));
    if (!img.all_finite()) throw IoError(path + ": payload contains non-finite values");
    return img;
}

inline void write_image(const std::string& path, const MultiBandImage& img) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(4 * img.data().size());
    for (double v : img.data()) detail::put_f32(bytes, v);
    detail::write_file(path, bytes);
    std::ofstream hdr(header_path(path));
    if (!hdr) throw IoError("cannot write " + header_path(path));
    std::ostringstream range;
    range.precision(9);
    range << img.meta().range.lo << ',' << img.meta().range.hi;
    hdr << "width=" << img.width() << '\n'
        << "height=" << img.height() << '\n'
        << "bands=" << img.bands() << '\n'
        << "dtype=f32\n"
        << "range=" << range.str() << '\n'
        << "order=bsq\n";
}

// ---------------------------------------------------------------------------
// Section-tagged binary container.
//
//   "VBGS"  u16 version  u16 section_count
//   per section: 4-byte tag, u64 payload length, payload
//
// GSET payload: u32 N, u32 B, u32 width, u32 height, f32 range lo, f32 range hi,
//   f32 arrays center_x[N] center_y[N] scale_x[N] scale_y[N] correlation[N]
//   feature[N*B] (Gaussian-major) temperature[1], then the base image [B*H*W] (bsq).
// SDEW payload: u32 channels, u32 patch, u32 hidden, u32 tensor_count, then per
//   tensor: u16 name length, name, u8 rank, u32 dims[rank], f32 values.

inline constexpr std::uint16_t kContainerVersion = 1;

struct Section {
    std::string tag;
    std::vector<std::uint8_t> payload;
};

inline std::vector<std::uint8_t> encode_container(const std::vector<Section>& sections) {
    std::vector<std::uint8_t> out = {'V', 'B', 'G', 'S'};
    detail::put_u16(out, kContainerVersion);
    detail::put_u16(out, static_cast<std::uint16_t>(sections.size()));
    for (const auto& s : sections) {
        if (s.tag.size() != 4) throw IoError("section tags are four bytes");
        out.insert(out.end(), s.tag.begin(), s.tag.end());
        detail::put_u64(out, s.payload.size());
        out.insert(out.end(), s.payload.begin(), s.payload.end());
    }
    return out;
}

inline std::vector<Section> decode_container(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    detail::ByteReader r(bytes, what);
    if (r.bytes(4) != "VBGS") throw IoError(what + ": not a VBGS container");
    const std::uint16_t version = r.u16();
    if (version != kContainerVersion) throw IoError(what + ": unsupported container version " + std::to_string(version));
    const std::uint16_t count = r.u16();
    std::vector<Section> sections;
    for (std::uint16_t i = 0; i < count; ++i) {
        Section s;
        s.tag = r.bytes(4);
        const std::uint64_t len = r.u64();
        r.need(len);
        const auto start = bytes.begin() + static_cast<std::ptrdiff_t>(r.position());
        s.payload.assign(start, start + static_cast<std::ptrdiff_t>(len));
        r.bytes(len);
        sections.push_back(std::move(s));
    }
    if (r.remaining() != 0) throw IoError(what + ": trailing bytes after the last section");
    return sections;
}

inline const Section& find_section(const std::vector<Section>& sections, const std::string& tag, const std::string& what) {
    for (const auto& s : sections)
        if (s.tag == tag) return s;
    throw IoError(what + ": missing " + tag + " section");
}

/// Fitted set as stored on disk: raw parameters plus the source image.
struct GaussianSetFile {
    RawGaussianParams raw;
    MultiBandImage base;

    GaussianSet to_set() const { return constrain(raw, base); }
};

inline Section encode_gaussian_section(const RawGaussianParams& raw, const MultiBandImage& base) {
    raw.check_shape();
    if (raw.count != base.pixel_count() || raw.bands != base.bands())
        throw ShapeError("raw parameters do not match the base image");
    Section s{"GSET", {}};
    auto& out = s.payload;
    detail::put_u32(out, static_cast<std::uint32_t>(raw.count));
    detail::put_u32(out, static_cast<std::uint32_t>(raw.bands));
    detail::put_u32(out, static_cast<std::uint32_t>(base.width()));
    detail::put_u32(out, static_cast<std::uint32_t>(base.height()));
    detail::put_f32(out, base.meta().range.lo);
    detail::put_f32(out, base.meta().range.hi);
    for (ParamClass c : kParamClasses)
        for (double v : raw.array(c)) detail::put_f32(out, v);
    for (double v : base.data()) detail::put_f32(out, v);
    return s;
}

inline GaussianSetFile decode_gaussian_section(const Section& s, const std::string& what) {
    detail::ByteReader r(s.payload, what);
    const std::size_t n = r.u32(), b = r.u32(), w = r.u32(), h = r.u32();
    ImageMeta meta{w, h, b, {}};
    meta.range.lo = r.f32();
    meta.range.hi = r.f32();
    if (n == 0 || b == 0 || n != w * h) throw IoError(what + ": inconsistent Gaussian counts");
    GaussianSetFile f;
    f.raw = RawGaussianParams::zeros(n, b);
    for (ParamClass c : kParamClasses)
        for (double& v : f.raw.array(c)) v = r.f32();
    std::vector<double> data(n * b);
    for (double& v : data) v = r.f32();
    if (r.remaining() != 0) throw IoError(what + ": GSET section has trailing bytes");
    try {
        f.base = MultiBandImage(meta, std::move(data));
        f.raw.validate();
    } catch (const Error& e) {
        throw IoError(what + ": " + e.what());
    }
    return f;
}

inline void write_gaussian_file(const std::string& path, const RawGaussianParams& raw, const MultiBandImage& base) {
    detail::write_file(path, encode_container({encode_gaussian_section(raw, base)}));
}

inline GaussianSetFile read_gaussian_file(const std::string& path) {
    const auto sections = decode_container(detail::read_file(path), path);
    return decode_gaussian_section(find_section(sections, "GSET", path), path);
}

namespace detail {

inline std::vector<std::pair<std::string, const Mlp2*>> named_mlps(const SdeWeights& w) {
    return {{"spatial1", &w.spatial[0]}, {"spectral1", &w.spectral[0]}, {"spatial2", &w.spatial[1]},
            {"spectral2", &w.spectral[1]}, {"fuse", &w.fuse}};
}

}  // namespace detail

inline Section encode_sde_section(const SdeWeights& w) {
    w.validate();
    Section s{"SDEW", {}};
    auto& out = s.payload;
    detail::put_u32(out, static_cast<std::uint32_t>(w.dims.channels));
    detail::put_u32(out, static_cast<std::uint32_t>(w.dims.patch));
    detail::put_u32(out, static_cast<std::uint32_t>(w.dims.hidden));
    detail::put_u32(out, 20);
    for (const auto& [name, mlp] : detail::named_mlps(w)) {
        const std::pair<const char*, std::pair<const std::vector<double>*, std::vector<std::size_t>>> tensors[] = {
            {".w1", {&mlp->w1, {mlp->hidden, mlp->in}}},
            {".b1", {&mlp->b1, {mlp->hidden}}},
            {".w2", {&mlp->w2, {mlp->out, mlp->hidden}}},
            {".b2", {&mlp->b2, {mlp->out}}}};
        for (const auto& [suffix, tensor] : tensors) {
            const std::string full = name + suffix;
            detail::put_u16(out, static_cast<std::uint16_t>(full.size()));
            out.insert(out.end(), full.begin(), full.end());
            out.push_back(static_cast<std::uint8_t>(tensor.second.size()));
            for (std::size_t d : tensor.second) detail::put_u32(out, static_cast<std::uint32_t>(d));
            for (double v : *tensor.first) detail::put_f32(out, v);
        }
    }
    return s;
}

inline SdeWeights decode_sde_section(const Section& s, const std::string& what) {
    detail::ByteReader r(s.payload, what);
    SdeDims dims;
    dims.channels = r.u32();
    dims.patch = r.u32();
    dims.hidden = r.u32();
    if (dims.channels == 0 || dims.patch == 0 || dims.hidden == 0 || dims.channels > (1u << 16) ||
        dims.patch > 255 || dims.hidden > (1u << 16))
        throw IoError(what + ": implausible SDE dimensions");
    SdeWeights w = SdeWeights::zeros(dims);
    std::map<std::string, std::vector<double>*> slots;
    for (int l = 0; l < 2; ++l) {
        const std::string idx = std::to_string(l + 1);
        for (auto& [prefix, mlp] : {std::pair<std::string, Mlp2*>{"spatial" + idx, &w.spatial[l]},
                                    std::pair<std::string, Mlp2*>{"spectral" + idx, &w.spectral[l]}}) {
            slots[prefix + ".w1"] = &mlp->w1;
            slots[prefix + ".b1"] = &mlp->b1;
            slots[prefix + ".w2"] = &mlp->w2;
            slots[prefix + ".b2"] = &mlp->b2;
        }
    }
    slots["fuse.w1"] = &w.fuse.w1;
    slots["fuse.b1"] = &w.fuse.b1;
    slots["fuse.w2"] = &w.fuse.w2;
    slots["fuse.b2"] = &w.fuse.b2;
    const std::uint32_t count = r.u32();
    std::size_t loaded = 0;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::string name = r.bytes(r.u16());
        const std::uint8_t rank = r.u8();
        std::size_t elems = 1;
        for (std::uint8_t d = 0; d < rank; ++d) elems *= r.u32();
        const auto it = slots.find(name);
        if (it == slots.end()) throw IoError(what + ": unknown SDE tensor " + name);
        if (it->second->size() != elems)
            throw IoError(what + ": tensor " + name + " has " + std::to_string(elems) + " values, expected " +
                          std::to_string(it->second->size()));
        for (double& v : *it->second) v = r.f32();
        ++loaded;
    }
    if (loaded != slots.size()) throw IoError(what + ": SDE weight section is missing tensors");
    try {
        w.validate();
    } catch (const Error& e) {
        throw IoError(what + ": " + e.what());
    }
    return w;
}

inline void write_sde_weights(const std::string& path, const SdeWeights& w) {
    detail::write_file(path, encode_container({encode_sde_section(w)}));
}

inline SdeWeights read_sde_weights(const std::string& path) {
    const auto sections = decode_container(detail::read_file(path), path);
    return decode_sde_section(find_section(sections, "SDEW", path), path);
}

// ---------------------------------------------------------------------------
// Portable graymap ingestion (P2 / P5, maxval up to 65535), scaled to [0, 1].

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;
};

inline GrayImage read_pgm(const std::string& path) {
    const auto bytes = detail::read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto token = [&] {
        skip_space();
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') t.push_back(static_cast<char>(bytes[pos++]));
        if (t.empty()) throw IoError(path + ": truncated PGM header");
        return t;
    };
    auto number = [&] {
        const std::string t = token();
        for (char ch : t)
            if (!std::isdigit(static_cast<unsigned char>(ch))) throw IoError(path + ": malformed PGM header");
        return static_cast<std::size_t>(std::stoull(t));
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P2") throw IoError(path + ": not a PGM file");
    GrayImage img;
    img.width = number();
    img.height = number();
    const std::size_t maxval = number();
    if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) throw IoError(path + ": invalid PGM header");
    img.values.resize(img.width * img.height);
    if (magic == "P5") {
        ++pos;  // single whitespace after maxval
        const std::size_t bpp = maxval < 256 ? 1 : 2;
        if (bytes.size() - std::min(pos, bytes.size()) < img.values.size() * bpp) throw IoError(path + ": truncated PGM data");
        for (double& v : img.values) {
            std::size_t raw = bytes[pos++];
            if (bpp == 2) raw = (raw << 8) | bytes[pos++];
            v = static_cast<double>(raw) / static_cast<double>(maxval);
        }
    } else {
        for (double& v : img.values) v = static_cast<double>(number()) / static_cast<double>(maxval);
    }
    return img;
}

/// Stacks per-band graymaps into one multi-band image in [0, 1].
inline MultiBandImage image_from_pgm_bands(const std::vector<std::string>& paths) {
    if (paths.empty()) throw IoError("no PGM bands given");
    std::vector<GrayImage> bands;
    for (const auto& p : paths) bands.push_back(read_pgm(p));
    ImageMeta meta{bands[0].width, bands[0].height, bands.size(), {}};
    MultiBandImage img(meta);
    for (std::size_t b = 0; b < bands.size(); ++b) {
        if (bands[b].width != meta.width || bands[b].height != meta.height)
            throw ShapeError(paths[b] + ": band size differs from " + paths[0]);
        std::copy(bands[b].values.begin(), bands[b].values.end(), img.band(b).begin());
    }
    return img;
}

}  // namespace vbgs
