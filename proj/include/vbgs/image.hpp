#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vbgs/errors.hpp"

namespace vbgs {

/// Closed interval the pixel values live in.
struct ValueRange {
    double lo = 0.0;
    double hi = 1.0;

    double width() const { return hi - lo; }
    bool operator==(const ValueRange&) const = default;
};

struct ImageMeta {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t bands = 0;
    ValueRange range{};

    std::size_t pixel_count() const { return width * height; }
    std::size_t value_count() const { return width * height * bands; }

    void validate() const {
        if (width < 1 || height < 1 || bands < 1)
            throw ShapeError("image dimensions must be positive (got " + std::to_string(width) + "x" +
                             std::to_string(height) + "x" + std::to_string(bands) + ")");
        if (!(range.lo < range.hi))
            throw ShapeError("value range lower bound must be below the upper bound");
    }

    bool same_shape(const ImageMeta& other) const {
        return width == other.width && height == other.height && bands == other.bands;
    }

    bool operator==(const ImageMeta&) const = default;
};

/// H x W x B raster stored band-sequentially: band-major, then row-major
/// within a band.
class MultiBandImage {
public:
    MultiBandImage() = default;

    explicit MultiBandImage(ImageMeta meta) : meta_(meta) {
        meta_.validate();
        data_.assign(meta_.value_count(), 0.0);
    }

    MultiBandImage(ImageMeta meta, std::vector<double> data) : meta_(meta), data_(std::move(data)) {
        meta_.validate();
        if (data_.size() != meta_.value_count())
            throw ShapeError("image payload has " + std::to_string(data_.size()) + " values, expected " +
                             std::to_string(meta_.value_count()));
    }

    const ImageMeta& meta() const { return meta_; }
    std::size_t width() const { return meta_.width; }
    std::size_t height() const { return meta_.height; }
    std::size_t bands() const { return meta_.bands; }
    std::size_t pixel_count() const { return meta_.pixel_count(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& at(std::size_t band, std::size_t row, std::size_t col) {
        return data_[(band * meta_.height + row) * meta_.width + col];
    }
    double at(std::size_t band, std::size_t row, std::size_t col) const {
        return data_[(band * meta_.height + row) * meta_.width + col];
    }

    /// Value of band b at flat pixel index (row * width + col).
    double& value(std::size_t band, std::size_t pixel) { return data_[band * meta_.pixel_count() + pixel]; }
    double value(std::size_t band, std::size_t pixel) const { return data_[band * meta_.pixel_count() + pixel]; }

    std::span<double> band(std::size_t b) {
        return std::span<double>(data_).subspan(b * meta_.pixel_count(), meta_.pixel_count());
    }
    std::span<const double> band(std::size_t b) const {
        return std::span<const double>(data_).subspan(b * meta_.pixel_count(), meta_.pixel_count());
    }

    /// Copies the B-vector at a flat pixel index into `out`.
    void spectrum(std::size_t pixel, std::span<double> out) const {
        for (std::size_t b = 0; b < meta_.bands; ++b) out[b] = value(b, pixel);
    }
    std::vector<double> spectrum(std::size_t pixel) const {
        std::vector<double> out(meta_.bands);
        spectrum(pixel, out);
        return out;
    }

    void set_spectrum(std::size_t pixel, std::span<const double> values) {
        for (std::size_t b = 0; b < meta_.bands; ++b) value(b, pixel) = values[b];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void validate() const {
        meta_.validate();
        if (data_.size() != meta_.value_count()) throw ShapeError("image payload size does not match its header");
        if (!all_finite()) throw ParameterError("image contains non-finite values");
    }

private:
    ImageMeta meta_{};
    std::vector<double> data_;
};

inline void require_same_shape(const MultiBandImage& a, const MultiBandImage& b, const char* what) {
    if (!a.meta().same_shape(b.meta()))
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + "x" + std::to_string(a.bands()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                         std::to_string(b.bands()));
}

}  // namespace vbgs
