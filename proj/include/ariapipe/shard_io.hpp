#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ariapipe/tokenizer.hpp"

namespace ariapipe::shard {

enum class Format { Text, Binary };
enum class RecordKind : std::uint8_t { Tokens = 0, Pretrain = 1, Finetune = 2, ViewA = 3, ViewB = 4 };

std::string_view kind_name(RecordKind k) noexcept;
std::optional<RecordKind> kind_from_name(std::string_view name) noexcept;
std::string_view format_name(Format f) noexcept;
std::optional<Format> format_from_name(std::string_view name) noexcept;

struct Record {
    std::string source_id;
    RecordKind kind = RecordKind::Tokens;
    std::vector<TokenId> ids;
    std::vector<std::uint32_t> boundaries;  // packed sequences only
    std::uint32_t pad_count = 0;

    friend bool operator==(const Record&, const Record&) = default;
};

struct Shard {
    nlohmann::json header;  // provenance
    std::vector<Record> records;
};

/// Binary layout: "ARIASHRD", u32 version, u32 header length + header JSON,
/// u32 record count, then per record: u32 id length + source id, u8 kind,
/// u32 n + n little-endian i32 ids, u32 m + m u32 boundaries, u32 pad count.
inline constexpr std::string_view kBinaryMagic = "ARIASHRD";
inline constexpr std::uint32_t kBinaryVersion = 1;

std::string encode(const Shard& shard, Format format);
Shard decode(std::string_view bytes);

/// Writes to a temporary sibling, syncs, then renames over the target so a
/// re-run never sees a partially written shard.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_all(const std::filesystem::path& path);

void write_shard(const std::filesystem::path& path, const Shard& shard, Format format);
Shard read_shard(const std::filesystem::path& path);

/// Shard file name for a stage, e.g. "tokens.jsonl" / "tokens.bin".
std::string shard_file_name(std::string_view stem, Format format);

struct EmbeddingRecord {
    std::string source_id;
    int slice_index = 0;
    std::vector<double> vector;
};

/// Newline-delimited {source_id, slice_index, vector} records.
std::vector<EmbeddingRecord> parse_embeddings(std::string_view text);
std::string format_embeddings(const std::vector<EmbeddingRecord>& records);

}  // namespace ariapipe::shard
