#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <array>
#include <string>

#include "aftrack/geometry.hpp"
#include "aftrack/tensor.hpp"

namespace aftrack {

/// Planar RGB image, values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<Real> v; // 3 * height * width

    Image() = default;
    Image(int w, int h) : width(w), height(h), v(static_cast<size_t>(3) * w * h, 0.0) {}

    Real& at(int c, int y, int x) {
        return v[(static_cast<std::int64_t>(c) * height + y) * width + x];
    }
    Real at(int c, int y, int x) const {
        return v[(static_cast<std::int64_t>(c) * height + y) * width + x];
    }

    std::array<Real, 3> mean_color() const {
        std::array<Real, 3> m{0, 0, 0};
        const std::int64_t hw = static_cast<std::int64_t>(width) * height;
        for (int c = 0; c < 3; ++c) {
            Real acc = 0;
            for (std::int64_t i = 0; i < hw; ++i) acc += v[c * hw + i];
            m[c] = acc / static_cast<Real>(hw);
        }
        return m;
    }
};

/// [1,3,H,W] network input, values shifted to roughly zero mean.
inline Tensor to_tensor(const Image& img) {
    Tensor t({1, 3, img.height, img.width});
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(img.v.size()); ++i)
        t.v[i] = img.v[i] - 0.5;
    return t;
}

/// Square crop of side `side` centered at (cx, cy), resampled bilinearly to
/// out_size x out_size. Out-of-frame samples take the per-channel image mean.
inline Image subwindow(const Image& src, Real cx, Real cy, Real side, int out_size) {
    check(side > 0 && out_size > 0, "subwindow: positive side and size required");
    Image out(out_size, out_size);
    const std::array<Real, 3> pad = src.mean_color();
    const Real origin_x = cx - side * 0.5;
    const Real origin_y = cy - side * 0.5;
    const Real step = side / out_size;

    auto fetch = [&](int c, int y, int x) -> Real {
        if (x < 0 || x >= src.width || y < 0 || y >= src.height) return pad[c];
        return src.at(c, y, x);
    };
    for (int j = 0; j < out_size; ++j) {
        const Real sy = origin_y + (j + 0.5) * step - 0.5;
        const int y0 = static_cast<int>(std::floor(sy));
        const Real fy = sy - y0;
        for (int i = 0; i < out_size; ++i) {
            const Real sx = origin_x + (i + 0.5) * step - 0.5;
            const int x0 = static_cast<int>(std::floor(sx));
            const Real fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                const Real v00 = fetch(c, y0, x0), v01 = fetch(c, y0, x0 + 1);
                const Real v10 = fetch(c, y0 + 1, x0), v11 = fetch(c, y0 + 1, x0 + 1);
                out.at(c, j, i) = v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) +
                                  v10 * (1 - fx) * fy + v11 * fx * fy;
            }
        }
    }
    return out;
}

/// Frame-to-crop coordinate transform matching subwindow().
inline Box crop_transform(const Box& frame_box, Real cx, Real cy, Real side, int out_size) {
    const Real scale = static_cast<Real>(out_size) / side;
    const Real ox = cx - side * 0.5;
    const Real oy = cy - side * 0.5;
    return {(frame_box.x0 - ox) * scale, (frame_box.y0 - oy) * scale, (frame_box.x1 - ox) * scale,
            (frame_box.y1 - oy) * scale};
}

inline void save_image(const Image& img, const std::string& path) {
    cv::Mat mat(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            auto clamp8 = [](Real v) {
                return static_cast<unsigned char>(std::min<Real>(std::max<Real>(v, 0), 1) * 255.0 +
                                                  0.5);
            };
            // OpenCV stores BGR
            mat.at<cv::Vec3b>(y, x) =
                cv::Vec3b(clamp8(img.at(2, y, x)), clamp8(img.at(1, y, x)), clamp8(img.at(0, y, x)));
        }
    check(cv::imwrite(path, mat), "save_image: cannot write " + path);
}

inline Image load_image(const std::string& path) {
    cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
    check(!mat.empty(), "load_image: cannot read " + path);
    Image img(mat.cols, mat.rows);
    for (int y = 0; y < mat.rows; ++y)
        for (int x = 0; x < mat.cols; ++x) {
            const cv::Vec3b px = mat.at<cv::Vec3b>(y, x);
            img.at(0, y, x) = px[2] / 255.0;
            img.at(1, y, x) = px[1] / 255.0;
            img.at(2, y, x) = px[0] / 255.0;
        }
    return img;
}

/// Axis-aligned rectangle outline, clipped to the image.
inline void draw_box(Image& img, const Box& b, Real r, Real g, Real bl, int thickness = 2) {
    const auto put = [&](int x, int y) {
        if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
        img.at(0, y, x) = r;
        img.at(1, y, x) = g;
        img.at(2, y, x) = bl;
    };
    const int x0 = static_cast<int>(std::lround(b.x0)), x1 = static_cast<int>(std::lround(b.x1));
    const int y0 = static_cast<int>(std::lround(b.y0)), y1 = static_cast<int>(std::lround(b.y1));
    for (int t = 0; t < thickness; ++t) {
        for (int x = x0; x <= x1; ++x) {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for (int y = y0; y <= y1; ++y) {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

/// Renders a [H,W] map in [0,1] as a blue-to-red heatmap of the given size.
inline Image heatmap(const std::vector<Real>& map, int map_w, int map_h, int out_size) {
    Image out(out_size, out_size);
    for (int j = 0; j < out_size; ++j)
        for (int i = 0; i < out_size; ++i) {
            const Real u = (i + 0.5) / out_size * map_w - 0.5;
            const Real w = (j + 0.5) / out_size * map_h - 0.5;
            const int x = std::min(std::max(static_cast<int>(std::lround(u)), 0), map_w - 1);
            const int y = std::min(std::max(static_cast<int>(std::lround(w)), 0), map_h - 1);
            const Real t = std::min<Real>(std::max<Real>(map[y * map_w + x], 0), 1);
            out.at(0, j, i) = t;
            out.at(1, j, i) = 0.25 + 0.5 * t * (1 - t) * 4 * 0.5;
            out.at(2, j, i) = 1.0 - t;
        }
    return out;
}

} // namespace aftrack
