#include "mffa/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace mffa {

Image Image::filled(int h, int w, uint8_t r, uint8_t g, uint8_t b) {
    Image img;
    img.h = h;
    img.w = w;
    img.rgb.resize(static_cast<size_t>(h) * w * 3);
    for (size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

Mask Mask::zeros(int h, int w) {
    Mask m;
    m.h = h;
    m.w = w;
    m.v.assign(static_cast<size_t>(h) * w, 0);
    return m;
}

int64_t Mask::count() const {
    int64_t n = 0;
    for (uint8_t x : v) n += x;
    return n;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    throw ValidationError(path + ": truncated header");
}

int parse_pos_int(const std::string& tok, const std::string& path, const char* what) {
    for (char ch : tok) {
        if (!std::isdigit(static_cast<unsigned char>(ch))) {
            throw ValidationError(path + ": malformed " + what + " '" + tok + "'");
        }
    }
    long v = std::stol(tok);
    if (v <= 0 || v > 1 << 20) throw ValidationError(path + ": " + what + " out of range");
    return static_cast<int>(v);
}

void read_header(std::istream& in, const std::string& path, const char* magic, int* h, int* w) {
    std::string m = next_token(in, path);
    if (m != magic) throw ValidationError(path + ": expected " + magic + " header, got '" + m + "'");
    *w = parse_pos_int(next_token(in, path), path, "width");
    *h = parse_pos_int(next_token(in, path), path, "height");
    int maxval = parse_pos_int(next_token(in, path), path, "maxval");
    if (maxval != 255) throw ValidationError(path + ": maxval must be 255, got " + std::to_string(maxval));
    // A single whitespace byte separates the header from binary data.
}

}  // namespace

Image load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path + ": cannot open");
    Image img;
    read_header(in, path, "P6", &img.h, &img.w);
    img.rgb.resize(static_cast<size_t>(img.h) * img.w * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
        throw ValidationError(path + ": truncated pixel data");
    }
    return img;
}

void save_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure(path + ": cannot write");
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw RuntimeFailure(path + ": write failed");
}

Mask load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path + ": cannot open");
    Mask m;
    read_header(in, path, "P5", &m.h, &m.w);
    std::vector<uint8_t> raw(static_cast<size_t>(m.h) * m.w);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw ValidationError(path + ": truncated pixel data");
    }
    m.v.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == 0) m.v[i] = 0;
        else if (raw[i] == 255) m.v[i] = 1;
        else throw ValidationError(path + ": mask value " + std::to_string(raw[i]) + " is not 0 or 255");
    }
    return m;
}

void save_pgm(const std::string& path, const Mask& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure(path + ": cannot write");
    out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<uint8_t> raw(mask.v.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = mask.v[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw RuntimeFailure(path + ": write failed");
}

Tensor image_to_tensor(const Image& img) {
    Tensor t = Tensor::zeros({img.h, img.w, 3});
    real* p = t.data();
    for (size_t i = 0; i < img.rgb.size(); ++i) p[i] = real(img.rgb[i]) / real(255);
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 3) {
        throw ValidationError("tensor_to_image: expected HxWx3, got " + shape_str(t.shape()));
    }
    Image img;
    img.h = t.dim(0);
    img.w = t.dim(1);
    img.rgb.resize(static_cast<size_t>(t.size()));
    const real* p = t.data();
    for (size_t i = 0; i < img.rgb.size(); ++i) {
        real v = std::round(p[i] * 255);
        img.rgb[i] = static_cast<uint8_t>(std::clamp(v, real(0), real(255)));
    }
    return img;
}

Tensor mask_to_tensor(const Mask& m) {
    Tensor t = Tensor::zeros({m.h, m.w, 1});
    real* p = t.data();
    for (size_t i = 0; i < m.v.size(); ++i) p[i] = real(m.v[i]);
    return t;
}

Tensor mask_to_onehot(const Mask& m) {
    Tensor t = Tensor::zeros({m.h, m.w, 2});
    real* p = t.data();
    for (size_t i = 0; i < m.v.size(); ++i) {
        p[2 * i] = real(m.v[i]);
        p[2 * i + 1] = real(1 - m.v[i]);
    }
    return t;
}

}  // namespace mffa
