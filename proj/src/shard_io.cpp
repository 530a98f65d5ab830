#include "ariapipe/shard_io.hpp"

#include <fmt/format.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <unistd.h>

namespace ariapipe::shard {

using nlohmann::json;

std::string_view kind_name(RecordKind k) noexcept {
    switch (k) {
        case RecordKind::Tokens: return "tokens";
        case RecordKind::Pretrain: return "pretrain";
        case RecordKind::Finetune: return "finetune";
        case RecordKind::ViewA: return "view_a";
        case RecordKind::ViewB: return "view_b";
    }
    return "unknown";
}

std::optional<RecordKind> kind_from_name(std::string_view name) noexcept {
    for (auto k : {RecordKind::Tokens, RecordKind::Pretrain, RecordKind::Finetune, RecordKind::ViewA,
                   RecordKind::ViewB}) {
        if (kind_name(k) == name) return k;
    }
    return std::nullopt;
}

std::string_view format_name(Format f) noexcept { return f == Format::Text ? "text" : "binary"; }

std::optional<Format> format_from_name(std::string_view name) noexcept {
    if (name == "text") return Format::Text;
    if (name == "binary") return Format::Binary;
    return std::nullopt;
}

std::string shard_file_name(std::string_view stem, Format format) {
    return fmt::format("{}.{}", stem, format == Format::Text ? "jsonl" : "bin");
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

class Cursor {
public:
    explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    // Element count whose payload must still fit in the buffer.
    std::uint32_t count(std::size_t elem_size) {
        const auto n = u32();
        need(std::size_t{n} * elem_size);
        return n;
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw std::runtime_error(fmt::format("binary shard truncated at byte {}", pos_));
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

json record_to_json(const Record& r) {
    json j{{"source_id", r.source_id}, {"kind", kind_name(r.kind)}, {"ids", r.ids}};
    if (r.kind == RecordKind::Pretrain || r.kind == RecordKind::Finetune) {
        j["boundaries"] = r.boundaries;
        j["pad"] = r.pad_count;
    }
    return j;
}

Record record_from_json(const json& j) {
    Record r;
    r.source_id = j.at("source_id").get<std::string>();
    const auto kind = kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("unknown record kind " + j.at("kind").dump());
    r.kind = *kind;
    r.ids = j.at("ids").get<std::vector<TokenId>>();
    if (j.contains("boundaries")) r.boundaries = j.at("boundaries").get<std::vector<std::uint32_t>>();
    if (j.contains("pad")) r.pad_count = j.at("pad").get<std::uint32_t>();
    return r;
}

}  // namespace

std::string encode(const Shard& shard, Format format) {
    std::string out;
    if (format == Format::Text) {
        out += json{{"provenance", shard.header}}.dump();
        out += '\n';
        for (const auto& r : shard.records) {
            out += record_to_json(r).dump();
            out += '\n';
        }
        return out;
    }

    out.append(kBinaryMagic);
    put_u32(out, kBinaryVersion);
    const auto header = shard.header.dump();
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_u32(out, static_cast<std::uint32_t>(shard.records.size()));
    for (const auto& r : shard.records) {
        put_u32(out, static_cast<std::uint32_t>(r.source_id.size()));
        out += r.source_id;
        out.push_back(static_cast<char>(r.kind));
        put_u32(out, static_cast<std::uint32_t>(r.ids.size()));
        for (auto id : r.ids) put_u32(out, static_cast<std::uint32_t>(id));
        put_u32(out, static_cast<std::uint32_t>(r.boundaries.size()));
        for (auto b : r.boundaries) put_u32(out, b);
        put_u32(out, r.pad_count);
    }
    return out;
}

Shard decode(std::string_view bytes) {
    Shard shard;
    if (bytes.substr(0, kBinaryMagic.size()) == kBinaryMagic) {
        Cursor in(bytes.substr(kBinaryMagic.size()));
        if (const auto v = in.u32(); v != kBinaryVersion) {
            throw std::runtime_error(fmt::format("unsupported binary shard version {}", v));
        }
        shard.header = json::parse(in.take(in.u32()));
        const auto count = in.count(17);  // smallest encoded record
        shard.records.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            Record r;
            r.source_id = std::string(in.take(in.u32()));
            const auto kind = in.u8();
            if (kind > static_cast<std::uint8_t>(RecordKind::ViewB)) throw std::runtime_error("bad record kind");
            r.kind = static_cast<RecordKind>(kind);
            r.ids.resize(in.count(4));
            for (auto& id : r.ids) id = static_cast<TokenId>(in.u32());
            r.boundaries.resize(in.count(4));
            for (auto& b : r.boundaries) b = in.u32();
            r.pad_count = in.u32();
            shard.records.push_back(std::move(r));
        }
        if (!in.done()) throw std::runtime_error("trailing bytes after binary shard");
        return shard;
    }

    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool first = true;
    while (pos < bytes.size()) {
        auto end = bytes.find('\n', pos);
        if (end == std::string_view::npos) end = bytes.size();
        const auto line = bytes.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        ++line_no;
        try {
            auto j = json::parse(line);
            if (first && j.contains("provenance")) {
                shard.header = j["provenance"];
            } else {
                shard.records.push_back(record_from_json(j));
            }
        } catch (const json::exception& e) {
            throw std::runtime_error(fmt::format("shard line {}: {}", line_no, e.what()));
        }
        first = false;
    }
    return shard;
}

void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size() && std::fflush(f) == 0 &&
                    ::fsync(::fileno(f)) == 0;
    std::fclose(f);
    if (!ok) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_shard(const std::filesystem::path& path, const Shard& shard, Format format) {
    write_atomic(path, encode(shard, format));
}

Shard read_shard(const std::filesystem::path& path) { return decode(read_all(path)); }

std::vector<EmbeddingRecord> parse_embeddings(std::string_view text) {
    std::vector<EmbeddingRecord> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("source_id").get<std::string>(), j.value("slice_index", 0),
                           j.at("vector").get<std::vector<double>>()});
        } catch (const json::exception& e) {
            throw std::runtime_error(fmt::format("embedding line {}: {}", line_no, e.what()));
        }
    }
    return out;
}

std::string format_embeddings(const std::vector<EmbeddingRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += json{{"source_id", r.source_id}, {"slice_index", r.slice_index}, {"vector", r.vector}}.dump();
        out += '\n';
    }
    return out;
}

}  // namespace ariapipe::shard
