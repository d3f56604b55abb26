#include "termrec/snapshot_format.hpp"

#include <sodium.h>

#include <array>
#include <cstring>

namespace termrec::snapshot {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'R', 'M', 'S', 'N', 'A', 'P', '\0'};
constexpr std::size_t kChecksumOffset = 64;
constexpr std::size_t kChecksumSize = 32;

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void raw(const void* p, std::size_t n) {
        auto* b = static_cast<const std::byte*>(p);
        out.insert(out.end(), b, b + n);
    }
    void put_u64_at(std::size_t pos, std::uint64_t v) {
        for (int i = 0; i < 8; ++i)
            out[pos + static_cast<std::size_t>(i)] = static_cast<std::byte>(v >> (8 * i));
    }
    std::vector<std::byte> out;

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i)
            out.push_back(static_cast<std::byte>(v >> (8 * i)));
    }
};

class Reader {
public:
    Reader(std::span<const std::byte> b, std::size_t pos) : bytes_(b), pos_(pos) {}

    std::uint64_t u64() { return get(8); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > bytes_.size() - pos_)
            throw CorruptSnapshot("snapshot truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::byte> bytes_;
    std::size_t pos_;
};

std::array<unsigned char, kChecksumSize> checksum(std::span<const std::byte> bytes) {
    static const bool ready = sodium_init() >= 0;
    if (!ready)
        throw std::runtime_error("libsodium failed to initialize");
    std::array<unsigned char, kChecksumSize> out{};
    crypto_generichash_state state;
    crypto_generichash_init(&state, nullptr, 0, out.size());
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(bytes.data()), kChecksumOffset);
    auto tail = bytes.subspan(kChecksumOffset + kChecksumSize);
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(tail.data()), tail.size());
    crypto_generichash_final(&state, out.data(), out.size());
    return out;
}

void write_terms(Writer& w, const std::vector<cooc::TermDf>& table) {
    w.u64(table.size());
    for (const auto& t : table) {
        w.u32(static_cast<std::uint32_t>(t.term.size()));
        w.raw(t.term.data(), t.term.size());
        w.u64(t.df);
    }
}

std::vector<cooc::TermDf> read_terms(Reader& r) {
    std::uint64_t count = r.u64();
    // Each entry needs at least 12 bytes.
    if (count > r.remaining() / 12)
        throw CorruptSnapshot("term table count exceeds file size");
    std::vector<cooc::TermDf> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto len = r.u32();
        auto term = r.str(len);
        out.push_back({std::move(term), r.u64()});
    }
    return out;
}

}  // namespace

std::vector<std::byte> encode(const SnapshotId& id, const cooc::CooccurrenceIndex& index) {
    Writer w;
    w.raw(kMagic.data(), kMagic.size());
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(kFixedHeaderSize + id.repo_id.size()));
    w.u64(index.n_docs());
    w.u64(id.sequence);
    for (int i = 0; i < 4; ++i)
        w.u64(0);  // offsets and size, patched below
    std::array<unsigned char, kChecksumSize> zero{};
    w.raw(zero.data(), zero.size());
    w.u32(static_cast<std::uint32_t>(id.repo_id.size()));
    w.raw(id.repo_id.data(), id.repo_id.size());

    w.put_u64_at(32, w.out.size());
    write_terms(w, index.source_table());
    w.put_u64_at(40, w.out.size());
    write_terms(w, index.target_table());
    w.put_u64_at(48, w.out.size());
    auto pairs = index.pair_table();
    w.u64(pairs.size());
    for (const auto& p : pairs) {
        w.u32(p.source);
        w.u32(p.target);
        w.u64(p.df);
    }
    w.put_u64_at(56, w.out.size());

    auto sum = checksum(w.out);
    std::memcpy(w.out.data() + kChecksumOffset, sum.data(), sum.size());
    return std::move(w.out);
}

Decoded decode(std::span<const std::byte> bytes) {
    if (bytes.size() < kFixedHeaderSize)
        throw CorruptSnapshot("snapshot truncated: " + std::to_string(bytes.size()) + " bytes, header needs " +
                              std::to_string(kFixedHeaderSize));
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw CorruptSnapshot("not a snapshot file (bad magic)");

    Reader header(bytes, 8);
    auto version = header.u32();
    if (version != kVersion)
        throw CorruptSnapshot("unsupported snapshot version " + std::to_string(version));
    auto header_size = header.u32();
    auto n_docs = header.u64();
    auto sequence = header.u64();
    auto source_offset = header.u64();
    auto target_offset = header.u64();
    auto pair_offset = header.u64();
    auto total_size = header.u64();
    if (total_size != bytes.size())
        throw CorruptSnapshot("snapshot size mismatch: header says " + std::to_string(total_size) + " bytes, found " +
                              std::to_string(bytes.size()));

    auto expected = checksum(bytes);
    if (std::memcmp(bytes.data() + kChecksumOffset, expected.data(), expected.size()) != 0)
        throw CorruptSnapshot("snapshot checksum mismatch");

    Reader r(bytes, kFixedHeaderSize - 4);
    auto repo_len = r.u32();
    if (header_size != kFixedHeaderSize + repo_len)
        throw CorruptSnapshot("inconsistent header size");
    SnapshotId id{r.str(repo_len), sequence};
    if (r.pos() != source_offset)
        throw CorruptSnapshot("source table offset mismatch");
    auto source = read_terms(r);
    if (r.pos() != target_offset)
        throw CorruptSnapshot("target table offset mismatch");
    auto target = read_terms(r);
    if (r.pos() != pair_offset)
        throw CorruptSnapshot("pair table offset mismatch");
    auto pair_count = r.u64();
    if (pair_count > r.remaining() / 16)
        throw CorruptSnapshot("pair table count exceeds file size");
    std::vector<cooc::PairRow> pairs;
    pairs.reserve(pair_count);
    for (std::uint64_t i = 0; i < pair_count; ++i) {
        cooc::PairRow p;
        p.source = r.u32();
        p.target = r.u32();
        p.df = r.u64();
        pairs.push_back(p);
    }
    if (r.remaining() != 0)
        throw CorruptSnapshot("trailing bytes after pair table");

    try {
        return {std::move(id), cooc::CooccurrenceIndex::from_tables(n_docs, std::move(source), std::move(target),
                                                                    std::move(pairs))};
    } catch (const std::invalid_argument& e) {
        throw CorruptSnapshot(std::string("inconsistent snapshot tables: ") + e.what());
    }
}

}  // namespace termrec::snapshot
