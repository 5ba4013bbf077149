#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cfie {

enum class Task { NER, ED, RE };
enum class Split { Train, Dev, Test };

Task parse_task(std::string_view name);
std::string_view to_string(Task task);
std::string_view to_string(Split split);

/// Head index of a root token.
inline constexpr int kRoot = -1;

/// String <-> id table. Feature vocabularies reserve id 0 for UNK and 1 for
/// MASK; the label vocabulary has no reserved entries.
class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kMask = 1;

  explicit Vocab(bool with_specials = true);

  int add(std::string_view token);
  /// UNK for feature vocabularies, -1 for the label vocabulary.
  int lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& at(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool has_specials() const { return with_specials_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  bool with_specials_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Vocabularies {
  Vocab words;
  Vocab pos;
  Vocab deprels;
  Vocab ner;
  Vocab labels{false};
};

struct Token {
  std::string form;
  int word = Vocab::kUnk;
  int pos = Vocab::kUnk;
  int head = kRoot;
  int deprel = Vocab::kUnk;
  std::optional<int> ner;
  /// BIOES tag id for NER/ED, -1 for RE.
  int gold = -1;
};

/// Half-open token range.
struct Span {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool contains(int i) const { return i >= begin && i < end; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

struct Relation {
  Span head;
  Span tail;
  int label = -1;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;
  std::vector<Relation> relations;

  std::size_t size() const { return tokens.size(); }
  std::vector<int> heads() const;
};

struct Corpus {
  std::vector<Sentence> sentences;
  Split split = Split::Train;
  Task task = Task::NER;
  std::shared_ptr<Vocabularies> vocabs;
};

// ---------------------------------------------------------------------------
// Trees

/// True when heads form one rooted tree: exactly one kRoot, no self loops,
/// every chain reaches the root.
bool is_valid_tree(std::span<const int> heads);
/// Throws StructureError naming the sentence.
void validate_sentence(const Sentence& sentence);

// ---------------------------------------------------------------------------
// CoNLL-style TSV. Columns: ID FORM POS HEAD DEPREL NER GOLD, 1-based ID and
// HEAD with 0 for the root, "_" for an absent NER or GOLD value. Optional
// "# id = <id>" names a sentence; "#rel\t<hs>:<he>\t<ts>:<te>\t<label>" lines
// (0-based, end exclusive) attach relations.

Corpus parse_conll(std::string_view text, Task task, std::shared_ptr<Vocabularies> vocabs,
                   Split split = Split::Train);
Corpus parse_conll(std::string_view text, Task task);
std::string serialize_conll(const Corpus& corpus);

Corpus read_conll_file(const std::filesystem::path& path, Task task,
                       std::shared_ptr<Vocabularies> vocabs, Split split);
void write_conll_file(const std::filesystem::path& path, const Corpus& corpus);

// ---------------------------------------------------------------------------
// BIOES tags

enum class TagPrefix { O, B, I, E, S };

struct TagParts {
  TagPrefix prefix = TagPrefix::O;
  std::string type;
};

/// Anything that is not "O" and lacks a B-/I-/E-/S- prefix is treated as O.
TagParts split_tag(std::string_view tag);

// ---------------------------------------------------------------------------
// Classes and buckets

/// Evaluation classes: span types for NER/ED, relation labels for RE. Ordered
/// by first appearance in the label vocabulary.
std::vector<std::string> class_inventory(const Vocabularies& vocabs, Task task);

/// Gold instance counts per class: spans for NER/ED, relations for RE.
std::map<std::string, std::size_t> count_instances(const Corpus& corpus);

enum class Bucket { Few, Medium, Many };
std::string_view to_string(Bucket bucket);

struct BucketThresholds {
  std::size_t few_max = 50;
  std::size_t medium_max = 500;
};

struct BucketSplit {
  BucketThresholds thresholds;
  std::vector<std::string> classes;
  std::vector<std::size_t> counts;
  std::vector<Bucket> assignment;
  std::vector<std::string> warnings;

  std::optional<Bucket> bucket_of(std::string_view cls) const;
  std::vector<std::size_t> members(Bucket bucket) const;
};

/// Few if count <= few_max, Medium if <= medium_max, else Many. Classes in
/// `classes` with no entry in `counts` count as zero and are flagged.
BucketSplit compute_buckets(const std::map<std::string, std::size_t>& counts,
                            const std::vector<std::string>& classes, BucketThresholds thresholds);
BucketSplit compute_buckets(const std::map<std::string, std::size_t>& counts, BucketThresholds thresholds);
BucketSplit compute_buckets(const Corpus& train, BucketThresholds thresholds);

}  // namespace cfie
