#include "dataset.hpp"

#include "image_io.hpp"

#include "json.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace glma {

std::string Manifest::resolve(size_t index) const {
    if (index >= records.size()) fail(ErrorKind::input, "manifest index out of range");
    fs::path p = fs::path(base_dir) / records[index].image_path;
    return p.string();
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open manifest '" + path + "'");
    Manifest m;
    m.base_dir = fs::path(path).parent_path().string();
    if (m.base_dir.empty()) m.base_dir = ".";
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::parse,
                 path + ":" + std::to_string(lineno) + ": malformed manifest line: " + e.what());
        }
        if (!j.is_object() || !j.contains("image_path") || !j.contains("caption") ||
            !j["image_path"].is_string() || !j["caption"].is_string())
            fail(ErrorKind::parse, path + ":" + std::to_string(lineno) +
                                       ": manifest line needs string fields "
                                       "'image_path' and 'caption'");
        ManifestRecord rec;
        rec.image_path = j["image_path"].get<std::string>();
        rec.caption = j["caption"].get<std::string>();
        m.records.push_back(std::move(rec));
    }
    for (size_t i = 0; i < m.records.size(); ++i) {
        if (!fs::exists(m.resolve(i)))
            fail(ErrorKind::input, "manifest record " + std::to_string(i) +
                                       ": image file '" + m.resolve(i) + "' does not exist");
    }
    return m;
}

void save_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write manifest '" + path + "'");
    for (const ManifestRecord& r : records) {
        json j;
        j["image_path"] = r.image_path;
        j["caption"] = r.caption;
        out << j.dump() << "\n";
    }
    if (!out) fail(ErrorKind::io, "write failure on manifest '" + path + "'");
}

namespace {

const std::map<std::string, std::array<double, 3>>& color_table() {
    static const std::map<std::string, std::array<double, 3>> t = {
        {"red", {1.0, -1.0, -1.0}},   {"green", {-1.0, 1.0, -1.0}},
        {"blue", {-1.0, -1.0, 1.0}},  {"yellow", {1.0, 1.0, -1.0}},
        {"purple", {1.0, -1.0, 1.0}}, {"cyan", {-1.0, 1.0, 1.0}},
        {"white", {1.0, 1.0, 1.0}},   {"gray", {0.0, 0.0, 0.0}},
    };
    return t;
}

} // namespace

const std::vector<std::string>& synth_colors() {
    static const std::vector<std::string> c = {"red",    "green", "blue",  "yellow",
                                               "purple", "cyan",  "white", "gray"};
    return c;
}

const std::vector<std::string>& synth_shapes() {
    static const std::vector<std::string> s = {"circle", "square", "triangle"};
    return s;
}

Image render_shape(int img_size, const std::string& shape, const std::string& fg,
                   const std::string& bg, int cx, int cy, int half) {
    auto fg_it = color_table().find(fg);
    auto bg_it = color_table().find(bg);
    if (fg_it == color_table().end() || bg_it == color_table().end())
        fail(ErrorKind::input, "render_shape: unknown color");
    bool circle = shape == "circle";
    bool square = shape == "square";
    bool triangle = shape == "triangle";
    if (!circle && !square && !triangle) fail(ErrorKind::input, "render_shape: unknown shape");

    Image img = Image::zeros(img_size, img_size);
    for (int y = 0; y < img_size; ++y) {
        for (int x = 0; x < img_size; ++x) {
            bool inside = false;
            int dx = x - cx, dy = y - cy;
            if (circle) {
                inside = dx * dx + dy * dy <= half * half;
            } else if (square) {
                inside = std::abs(dx) <= half && std::abs(dy) <= half;
            } else {
                // upward triangle: apex at (cx, cy - half), base at cy + half
                if (dy >= -half && dy <= half) {
                    double spread = (static_cast<double>(dy) + half) / 2.0;
                    inside = std::abs(dx) <= spread;
                }
            }
            const auto& rgb = inside ? fg_it->second : bg_it->second;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[static_cast<size_t>(c)];
        }
    }
    return img;
}

Manifest synth_dataset(const std::string& out_dir, int count, int img_size, RngStream& rng) {
    if (count < 1) fail(ErrorKind::input, "synth_dataset: count must be positive");
    fs::create_directories(fs::path(out_dir) / "images");

    const auto& colors = synth_colors();
    const auto& shapes = synth_shapes();
    std::vector<ManifestRecord> records;
    records.reserve(static_cast<size_t>(count));

    for (int i = 0; i < count; ++i) {
        size_t fg = rng.uniform_int(colors.size());
        size_t bg = rng.uniform_int(colors.size() - 1);
        if (bg >= fg) ++bg; // background color always differs from the shape
        size_t sh = rng.uniform_int(shapes.size());
        int jitter = std::max(1, img_size / 8);
        int cx = img_size / 2 + static_cast<int>(rng.uniform_int(2 * jitter + 1)) - jitter;
        int cy = img_size / 2 + static_cast<int>(rng.uniform_int(2 * jitter + 1)) - jitter;
        int half = img_size / 4 + static_cast<int>(rng.uniform_int(img_size / 8 + 1));

        Image img = render_shape(img_size, shapes[sh], colors[fg], colors[bg], cx, cy, half);
        char name[32];
        std::snprintf(name, sizeof(name), "images/%04d.png", i);
        write_png((fs::path(out_dir) / name).string(), img);

        ManifestRecord rec;
        rec.image_path = name;
        rec.caption = "a " + colors[fg] + " " + shapes[sh] + " on a " + colors[bg] + " background";
        records.push_back(std::move(rec));
    }
    std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
    save_manifest(manifest_path, records);
    return load_manifest(manifest_path);
}

} // namespace glma
