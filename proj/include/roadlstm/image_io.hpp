#pragma once

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/pipeline.hpp"
#include "roadlstm/tensor.hpp"

namespace roadlstm {

// 8-bit PNG input/output via libpng's simplified API. Images are RGB
// normalized to [0,1]; masks are single-channel rasters with 0/255 on disk
// and {0,1} in memory.

inline Tensor3 read_png_rgb(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw DataError("cannot read PNG '" + path + "': " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw DataError("cannot decode PNG '" + path + "': " + img.message);
    }
    const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
    Tensor3 out(Shape3{w, h, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)] / 255.0;
    return out;
}

inline Tensor3 read_png_mask(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw DataError("cannot read PNG '" + path + "': " + img.message);
    }
    img.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw DataError("cannot decode PNG '" + path + "': " + img.message);
    }
    const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
    Tensor3 out(Shape3{w, h, 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y, 0) = buf[static_cast<std::size_t>(y) * w + x] > 127 ? 1.0 : 0.0;
    return out;
}

inline unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

inline void write_png_rgb(const std::string& path, const Tensor3& rgb) {
    if (rgb.shape().d != 3) throw ShapeError("write_png_rgb: tensor must have 3 channels");
    const int w = rgb.shape().w, h = rgb.shape().h;
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                buf[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)] =
                    to_byte(rgb.at(x, y, c));
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw DataError("cannot write PNG '" + path + "': " + img.message);
    }
}

inline void write_png_mask(const std::string& path, const Tensor3& mask) {
    if (mask.shape().d != 1) throw ShapeError("write_png_mask: tensor must have 1 channel");
    const int w = mask.shape().w, h = mask.shape().h;
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            buf[static_cast<std::size_t>(y) * w + x] = mask.at(x, y, 0) > 0.5 ? 255 : 0;
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw DataError("cannot write PNG '" + path + "': " + img.message);
    }
}

// RGB overlay with the predicted road region tinted.
inline void write_png_overlay(const std::string& path, const Tensor3& rgb, const Tensor3& mask) {
    if (!(rgb.shape().w == mask.shape().w && rgb.shape().h == mask.shape().h)) {
        throw ShapeError("write_png_overlay: image/mask size mismatch");
    }
    Tensor3 out = rgb;
    for (int y = 0; y < rgb.shape().h; ++y)
        for (int x = 0; x < rgb.shape().w; ++x)
            if (mask.at(x, y, 0) > 0.5) {
                out.at(x, y, 0) = 0.6 * rgb.at(x, y, 0);
                out.at(x, y, 1) = 0.6 * rgb.at(x, y, 1) + 0.4;
                out.at(x, y, 2) = 0.6 * rgb.at(x, y, 2);
            }
    write_png_rgb(path, out);
}

// ---------------------------------------------------------------------------
// Dataset directory convention: DIR/images/*.png paired with DIR/masks/*.png
// by file stem. Entries come back sorted by stem.
// ---------------------------------------------------------------------------

struct DatasetEntry {
    std::string stem;
    RoadFrame frame;
};

inline std::vector<DatasetEntry> load_dataset(const std::string& dir, bool require_masks) {
    namespace fs = std::filesystem;
    const fs::path images = fs::path(dir) / "images";
    const fs::path masks = fs::path(dir) / "masks";
    if (!fs::is_directory(images)) {
        throw DataError("dataset directory '" + dir + "' has no images/ subdirectory");
    }
    std::map<std::string, fs::path> image_paths;
    for (const auto& e : fs::directory_iterator(images)) {
        if (e.path().extension() == ".png") image_paths[e.path().stem().string()] = e.path();
    }
    if (image_paths.empty()) throw DataError("no PNG images under '" + images.string() + "'");

    std::vector<std::string> missing;
    std::vector<DatasetEntry> out;
    for (const auto& [stem, img_path] : image_paths) {
        DatasetEntry entry;
        entry.stem = stem;
        entry.frame.rgb = read_png_rgb(img_path.string());
        const fs::path mask_path = masks / (stem + ".png");
        if (fs::exists(mask_path)) {
            entry.frame.mask = read_png_mask(mask_path.string());
            if (entry.frame.mask->shape().w != entry.frame.rgb.shape().w ||
                entry.frame.mask->shape().h != entry.frame.rgb.shape().h) {
                throw DataError("mask size mismatch for stem '" + stem + "'");
            }
        } else if (require_masks) {
            missing.push_back(stem);
        }
        out.push_back(std::move(entry));
    }
    if (!missing.empty()) {
        std::string list;
        for (const std::string& s : missing) list += (list.empty() ? "" : ", ") + s;
        throw DataError("missing masks for stems: " + list);
    }
    return out;
}

inline void save_dataset(const std::string& dir, const std::vector<RoadFrame>& frames) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "scene_%04zu", i);
        write_png_rgb((fs::path(dir) / "images" / (std::string(stem) + ".png")).string(),
                      frames[i].rgb);
        if (frames[i].mask) {
            write_png_mask((fs::path(dir) / "masks" / (std::string(stem) + ".png")).string(),
                           *frames[i].mask);
        }
    }
}

}  // namespace roadlstm
