#include "vary/png_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "vary/common.hpp"

namespace vary {

namespace {

// ---------------------------------------------------------------- checksums

uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0) {
    static std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

uint32_t adler32(const uint8_t* data, size_t n) {
    uint32_t s1 = 1, s2 = 0;
    for (size_t i = 0; i < n; ++i) {
        s1 = (s1 + data[i]) % 65521u;
        s2 = (s2 + s1) % 65521u;
    }
    return (s2 << 16) | s1;
}

// ------------------------------------------------------------ bit plumbing

class BitWriter {
public:
    explicit BitWriter(std::vector<uint8_t>& out) : out_(out) {}

    // deflate packs bits LSB-first
    void put_bits(uint32_t value, int count) {
        for (int i = 0; i < count; ++i) {
            acc_ |= ((value >> i) & 1u) << nbits_;
            if (++nbits_ == 8) flush_byte();
        }
    }

    // huffman codes enter the stream most-significant code bit first
    void put_code(uint32_t code, int len) {
        for (int i = len - 1; i >= 0; --i) {
            acc_ |= ((code >> i) & 1u) << nbits_;
            if (++nbits_ == 8) flush_byte();
        }
    }

    void align() {
        if (nbits_) flush_byte();
    }

private:
    void flush_byte() {
        out_.push_back(static_cast<uint8_t>(acc_));
        acc_ = 0;
        nbits_ = 0;
    }
    std::vector<uint8_t>& out_;
    uint32_t acc_ = 0;
    int nbits_ = 0;
};

class BitReader {
public:
    BitReader(const uint8_t* data, size_t n) : data_(data), n_(n) {}

    uint32_t get_bits(int count) {
        uint32_t v = 0;
        for (int i = 0; i < count; ++i) v |= static_cast<uint32_t>(get_bit()) << i;
        return v;
    }

    int get_bit() {
        if (pos_ >= n_) throw DataError("png: truncated deflate stream");
        const int b = (data_[pos_] >> bit_) & 1;
        if (++bit_ == 8) {
            bit_ = 0;
            ++pos_;
        }
        return b;
    }

    void align() {
        if (bit_) {
            bit_ = 0;
            ++pos_;
        }
    }

    const uint8_t* byte_ptr() const { return data_ + pos_; }
    size_t remaining() const { return n_ - pos_; }
    void skip_bytes(size_t k) { pos_ += k; }

private:
    const uint8_t* data_;
    size_t n_;
    size_t pos_ = 0;
    int bit_ = 0;
};

// -------------------------------------------------------------- length maps

struct LenCode {
    int code, extra, base;
};

LenCode length_code(int len) {  // len in [3,258]
    static const int base[] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
                               31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
    static const int extra[] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
    for (int i = 28; i >= 0; --i)
        if (len >= base[i]) return {257 + i, extra[i], base[i]};
    throw DataError("png: bad match length");
}

LenCode dist_code(int dist) {  // dist in [1,32768]
    static const int base[] = {1,    2,    3,    4,    5,    7,     9,     13,    17,   25,
                               33,   49,   65,   97,   129,  193,   257,   385,   513,  769,
                               1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
    static const int extra[] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
    for (int i = 29; i >= 0; --i)
        if (dist >= base[i]) return {i, extra[i], base[i]};
    throw DataError("png: bad match distance");
}

void put_fixed_litlen(BitWriter& bw, int sym) {
    if (sym <= 143)
        bw.put_code(0x30 + sym, 8);
    else if (sym <= 255)
        bw.put_code(0x190 + (sym - 144), 9);
    else if (sym <= 279)
        bw.put_code(sym - 256, 7);
    else
        bw.put_code(0xC0 + (sym - 280), 8);
}

// ------------------------------------------------------------------ deflate

// greedy LZ77 with a 3-byte hash head + limited chain
std::vector<uint8_t> deflate_fixed(const std::vector<uint8_t>& src) {
    std::vector<uint8_t> out;
    BitWriter bw(out);
    bw.put_bits(1, 1);  // final block
    bw.put_bits(1, 2);  // fixed huffman

    constexpr int kWindow = 32768;
    constexpr int kMaxChain = 32;
    constexpr uint32_t kHashSize = 1 << 15;
    std::vector<int32_t> head(kHashSize, -1);
    std::vector<int32_t> prev(src.size(), -1);
    auto hash3 = [&](size_t i) {
        return ((src[i] << 10) ^ (src[i + 1] << 5) ^ src[i + 2]) & (kHashSize - 1);
    };

    const size_t n = src.size();
    size_t i = 0;
    while (i < n) {
        int best_len = 0, best_dist = 0;
        if (i + 2 < n) {
            const uint32_t h = hash3(i);
            int32_t cand = head[h];
            int chain = 0;
            while (cand >= 0 && chain < kMaxChain && i - static_cast<size_t>(cand) <= kWindow) {
                int len = 0;
                const int max_len = static_cast<int>(std::min<size_t>(258, n - i));
                while (len < max_len && src[static_cast<size_t>(cand) + len] == src[i + len]) ++len;
                if (len > best_len) {
                    best_len = len;
                    best_dist = static_cast<int>(i - static_cast<size_t>(cand));
                    if (len >= 258) break;
                }
                cand = prev[static_cast<size_t>(cand)];
                ++chain;
            }
            prev[i] = head[h];
            head[h] = static_cast<int32_t>(i);
        }
        if (best_len >= 3) {
            const LenCode lc = length_code(best_len);
            put_fixed_litlen(bw, lc.code);
            bw.put_bits(static_cast<uint32_t>(best_len - lc.base), lc.extra);
            const LenCode dc = dist_code(best_dist);
            bw.put_code(static_cast<uint32_t>(dc.code), 5);
            bw.put_bits(static_cast<uint32_t>(best_dist - dc.base), dc.extra);
            // index the skipped positions so later matches can reach them
            const size_t end = std::min(i + static_cast<size_t>(best_len), n >= 2 ? n - 2 : 0);
            for (size_t j = i + 1; j < end; ++j) {
                const uint32_t h = hash3(j);
                prev[j] = head[h];
                head[h] = static_cast<int32_t>(j);
            }
            i += static_cast<size_t>(best_len);
        } else {
            put_fixed_litlen(bw, src[i]);
            ++i;
        }
    }
    put_fixed_litlen(bw, 256);  // end of block
    bw.align();
    return out;
}

// ------------------------------------------------------------------ inflate

struct HuffTable {
    // canonical decode bookkeeping per bit length
    std::array<int, 16> count{};
    std::array<int, 16> first_code{};
    std::array<int, 16> first_index{};
    std::vector<int> symbols;

    void build(const std::vector<int>& lengths) {
        count.fill(0);
        for (int l : lengths)
            if (l) ++count[static_cast<size_t>(l)];
        int code = 0, index = 0;
        for (int l = 1; l < 16; ++l) {
            code = (code + count[static_cast<size_t>(l - 1)]) << 1;
            first_code[static_cast<size_t>(l)] = code;
            first_index[static_cast<size_t>(l)] = index;
            index += count[static_cast<size_t>(l)];
        }
        symbols.assign(static_cast<size_t>(index), 0);
        std::array<int, 16> pos = first_index;
        for (size_t s = 0; s < lengths.size(); ++s) {
            const int l = lengths[s];
            if (l) symbols[static_cast<size_t>(pos[static_cast<size_t>(l)]++)] = static_cast<int>(s);
        }
    }

    int decode(BitReader& br) const {
        int code = 0;
        for (int l = 1; l < 16; ++l) {
            code = (code << 1) | br.get_bit();
            const int cnt = count[static_cast<size_t>(l)];
            if (cnt && code - first_code[static_cast<size_t>(l)] < cnt)
                return symbols[static_cast<size_t>(first_index[static_cast<size_t>(l)] +
                                                   code - first_code[static_cast<size_t>(l)])];
        }
        throw DataError("png: invalid huffman code");
    }
};

std::vector<uint8_t> inflate(const uint8_t* data, size_t n) {
    BitReader br(data, n);
    std::vector<uint8_t> out;
    bool final_block = false;
    while (!final_block) {
        final_block = br.get_bit() != 0;
        const uint32_t btype = br.get_bits(2);
        if (btype == 0) {
            br.align();
            if (br.remaining() < 4) throw DataError("png: truncated stored block");
            const uint8_t* p = br.byte_ptr();
            const uint32_t len = p[0] | (p[1] << 8);
            const uint32_t nlen = p[2] | (p[3] << 8);
            if ((len ^ 0xFFFFu) != nlen) throw DataError("png: stored block length mismatch");
            br.skip_bytes(4);
            if (br.remaining() < len) throw DataError("png: truncated stored block data");
            out.insert(out.end(), br.byte_ptr(), br.byte_ptr() + len);
            br.skip_bytes(len);
            continue;
        }
        HuffTable litlen, dist;
        if (btype == 1) {
            std::vector<int> ll(288);
            for (int s = 0; s < 288; ++s)
                ll[static_cast<size_t>(s)] = s <= 143 ? 8 : s <= 255 ? 9 : s <= 279 ? 7 : 8;
            litlen.build(ll);
            dist.build(std::vector<int>(30, 5));
        } else if (btype == 2) {
            const int hlit = static_cast<int>(br.get_bits(5)) + 257;
            const int hdist = static_cast<int>(br.get_bits(5)) + 1;
            const int hclen = static_cast<int>(br.get_bits(4)) + 4;
            static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                          11, 4,  12, 3, 13, 2, 14, 1, 15};
            std::vector<int> cl_lengths(19, 0);
            for (int k = 0; k < hclen; ++k)
                cl_lengths[static_cast<size_t>(order[k])] = static_cast<int>(br.get_bits(3));
            HuffTable cl;
            cl.build(cl_lengths);
            std::vector<int> lengths;
            lengths.reserve(static_cast<size_t>(hlit + hdist));
            while (static_cast<int>(lengths.size()) < hlit + hdist) {
                const int sym = cl.decode(br);
                if (sym < 16) {
                    lengths.push_back(sym);
                } else if (sym == 16) {
                    if (lengths.empty()) throw DataError("png: bad code length repeat");
                    const int rep = 3 + static_cast<int>(br.get_bits(2));
                    for (int k = 0; k < rep; ++k) lengths.push_back(lengths.back());
                } else if (sym == 17) {
                    const int rep = 3 + static_cast<int>(br.get_bits(3));
                    lengths.insert(lengths.end(), static_cast<size_t>(rep), 0);
                } else {
                    const int rep = 11 + static_cast<int>(br.get_bits(7));
                    lengths.insert(lengths.end(), static_cast<size_t>(rep), 0);
                }
            }
            litlen.build(std::vector<int>(lengths.begin(), lengths.begin() + hlit));
            dist.build(std::vector<int>(lengths.begin() + hlit, lengths.end()));
        } else {
            throw DataError("png: reserved deflate block type");
        }
        static const int len_base[] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23,
                                       27, 31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
        static const int len_extra[] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                        2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
        static const int dist_base[] = {1,    2,    3,    4,    5,    7,    9,    13,    17,    25,
                                        33,   49,   65,   97,   129,  193,  257,  385,   513,   769,
                                        1025, 1537, 2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577};
        static const int dist_extra[] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                         6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
        while (true) {
            const int sym = litlen.decode(br);
            if (sym == 256) break;
            if (sym < 256) {
                out.push_back(static_cast<uint8_t>(sym));
                continue;
            }
            const int li = sym - 257;
            if (li > 28) throw DataError("png: bad length symbol");
            const int len = len_base[li] + static_cast<int>(br.get_bits(len_extra[li]));
            const int ds = dist.decode(br);
            if (ds > 29) throw DataError("png: bad distance symbol");
            const int d = dist_base[ds] + static_cast<int>(br.get_bits(dist_extra[ds]));
            if (static_cast<size_t>(d) > out.size()) throw DataError("png: distance too far back");
            const size_t start = out.size() - static_cast<size_t>(d);
            for (int k = 0; k < len; ++k) out.push_back(out[start + static_cast<size_t>(k)]);
        }
    }
    return out;
}

// --------------------------------------------------------------- png chunks

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

uint32_t read_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, crc32(body.data(), body.size()));
}

}  // namespace

std::vector<uint8_t> encode_png(const ImageRaster& img) {
    const int h = img.height(), w = img.width();
    if (h <= 0 || w <= 0) throw InputError("png: empty image");
    // raw scanlines, filter byte 0 per row
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x) {
            const Rgb c = img.get8(x, y);
            raw.push_back(c.r);
            raw.push_back(c.g);
            raw.push_back(c.b);
        }
    }
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    const std::vector<uint8_t> comp = deflate_fixed(raw);
    z.insert(z.end(), comp.begin(), comp.end());
    put_u32(z, adler32(raw.data(), raw.size()));

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(w));
    put_u32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", {});
    return out;
}

ImageRaster decode_png(const std::vector<uint8_t>& bytes) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw DataError("png: bad signature");
    size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = read_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw DataError("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("png: bad IHDR");
            w = static_cast<int>(read_u32(data));
            h = static_cast<int>(read_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw DataError("png: interlaced images unsupported");
            if (bit_depth != 8) throw DataError("png: only 8-bit depth supported");
            if (color_type != 0 && color_type != 2 && color_type != 6)
                throw DataError("png: unsupported color type " + std::to_string(color_type));
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || idat.size() < 6) throw DataError("png: missing image data");
    // strip zlib wrapper (2-byte header, 4-byte adler)
    const std::vector<uint8_t> raw = inflate(idat.data() + 2, idat.size() - 6);
    const int ch = color_type == 0 ? 1 : color_type == 2 ? 3 : 4;
    const size_t stride = static_cast<size_t>(w) * static_cast<size_t>(ch);
    if (raw.size() != static_cast<size_t>(h) * (stride + 1))
        throw DataError("png: scanline size mismatch");
    std::vector<uint8_t> picture(static_cast<size_t>(h) * stride);
    // unfilter
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        uint8_t* dst = picture.data() + static_cast<size_t>(y) * stride;
        const uint8_t* up = y ? picture.data() + static_cast<size_t>(y - 1) * stride : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<size_t>(ch) ? dst[i - static_cast<size_t>(ch)] : 0;
            const int b = up ? up[i] : 0;
            const int cdiag = (up && i >= static_cast<size_t>(ch)) ? up[i - static_cast<size_t>(ch)] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - cdiag;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - cdiag);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : cdiag);
                    break;
                }
                default: throw DataError("png: unknown filter type");
            }
            dst[i] = static_cast<uint8_t>(v & 0xFF);
        }
    }
    ImageRaster img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const uint8_t* p = picture.data() + static_cast<size_t>(y) * stride +
                               static_cast<size_t>(x) * static_cast<size_t>(ch);
            Rgb c;
            if (ch == 1)
                c = {p[0], p[0], p[0]};
            else
                c = {p[0], p[1], p[2]};
            img.set(x, y, c);
        }
    return img;
}

void write_png(const std::string& path, const ImageRaster& img) {
    const std::vector<uint8_t> bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write: " + path);
}

ImageRaster read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open image: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace vary
