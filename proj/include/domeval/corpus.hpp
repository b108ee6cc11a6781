#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/text.hpp"

namespace domeval::corpus {

struct CorpusDocument {
    std::string id;
    std::string path;
    std::string title;
    bool essential = false;
    bool special = false;
    std::string raw_text;
    std::string cleaned_text;
};

struct Chapter {
    std::string doc_id;
    std::size_t index = 0;
    std::string heading;
    std::string text;
    std::size_t token_estimate = 0;

    /// Stable identifier used as the context_ref of generated items.
    std::string ref() const;
};

enum class ChunkStrategy { recursive, markdown_header };

std::string_view to_string(ChunkStrategy s);
ChunkStrategy parse_chunk_strategy(std::string_view s);

struct Chunk {
    std::string doc_id;
    std::string chunk_id;
    std::string text;
    std::size_t token_count = 0;
    std::size_t span_begin = 0;  // byte offsets into cleaned_text
    std::size_t span_end = 0;
    ChunkStrategy strategy = ChunkStrategy::recursive;
};

/// Heading patterns, matched case-insensitively against the heading text.
/// A trailing '*' makes the pattern a prefix match.
struct BoilerplatePatterns {
    std::vector<std::string> patterns;

    static BoilerplatePatterns defaults();
    bool matches(std::string_view heading_text) const;
};

/// Removes every level-1 or level-2 section whose heading matches a pattern,
/// body and nested subsections included. Everything else is kept verbatim.
std::string clean_document(std::string_view raw, const BoilerplatePatterns& patterns);

struct ChapterSplit {
    std::vector<Chapter> chapters;
    /// Headings of chapters beyond the cap, in document order.
    std::vector<std::string> dropped;
};

ChapterSplit split_chapters(const CorpusDocument& doc, std::size_t max_chapters = 10,
                            std::size_t max_tokens = 50000,
                            const TokenEstimator& estimator = default_estimator());

std::size_t estimate_tokens(std::string_view text,
                            const TokenEstimator& estimator = default_estimator());

std::vector<Chunk> chunk_document(const CorpusDocument& doc, ChunkStrategy strategy,
                                  std::size_t size, std::size_t overlap,
                                  const TokenEstimator& estimator = default_estimator());

/// Loads a JSON manifest: {"documents": [{"id", "path", "title"?, "essential"?,
/// "special"?}]}. Relative paths resolve against the manifest's directory.
/// Documents are read and cleaned with `patterns`.
std::vector<CorpusDocument> load_manifest(const std::filesystem::path& manifest,
                                          const BoilerplatePatterns& patterns =
                                              BoilerplatePatterns::defaults());

/// One JSON object per line: {doc_id, chunk_id, strategy, char_span, text}.
std::string chunks_to_jsonl(const std::vector<Chunk>& chunks);
std::vector<Chunk> chunks_from_jsonl(std::string_view jsonl);

std::string chapters_to_jsonl(const std::vector<Chapter>& chapters);
std::vector<Chapter> chapters_from_jsonl(std::string_view jsonl);

}  // namespace domeval::corpus
