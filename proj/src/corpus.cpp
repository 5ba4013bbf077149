#include "cfie/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "cfie/errors.hpp"

namespace cfie {

Task parse_task(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ner") return Task::NER;
  if (lower == "ed") return Task::ED;
  if (lower == "re") return Task::RE;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected ner, ed or re)");
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::NER: return "ner";
    case Task::ED: return "ed";
    case Task::RE: return "re";
  }
  return "?";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(bool with_specials) : with_specials_(with_specials) {
  if (with_specials_) {
    add("<unk>");
    add("<mask>");
  }
}

int Vocab::add(std::string_view token) {
  std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

int Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  return with_specials_ ? kUnk : -1;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range (size " +
                     std::to_string(tokens_.size()) + ")");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Sentence::heads() const {
  std::vector<int> h;
  h.reserve(tokens.size());
  for (const auto& t : tokens) h.push_back(t.head);
  return h;
}

// ---------------------------------------------------------------------------
// Trees

bool is_valid_tree(std::span<const int> heads) {
  const int n = static_cast<int>(heads.size());
  if (n == 0) return false;
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const int h = heads[static_cast<std::size_t>(i)];
    if (h == kRoot) {
      ++roots;
    } else if (h < 0 || h >= n || h == i) {
      return false;
    }
  }
  if (roots != 1) return false;
  // 0 = unvisited, 1 = on current path, 2 = known to reach the root.
  std::vector<char> state(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    std::vector<int> path;
    int cur = i;
    while (cur != kRoot && state[static_cast<std::size_t>(cur)] == 0) {
      state[static_cast<std::size_t>(cur)] = 1;
      path.push_back(cur);
      cur = heads[static_cast<std::size_t>(cur)];
    }
    if (cur != kRoot && state[static_cast<std::size_t>(cur)] == 1) return false;
    for (int p : path) state[static_cast<std::size_t>(p)] = 2;
  }
  return true;
}

void validate_sentence(const Sentence& sentence) {
  const auto heads = sentence.heads();
  if (!is_valid_tree(heads))
    throw StructureError("sentence '" + sentence.id + "': dependency heads do not form a single-rooted tree");
  const int n = static_cast<int>(sentence.size());
  for (const auto& rel : sentence.relations) {
    for (const Span& s : {rel.head, rel.tail}) {
      if (s.begin < 0 || s.end > n || s.begin >= s.end)
        throw StructureError("sentence '" + sentence.id + "': relation span " + std::to_string(s.begin) + ":" +
                             std::to_string(s.end) + " is empty or out of bounds");
    }
  }
}

// ---------------------------------------------------------------------------
// CoNLL

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(std::string_view field, std::size_t line_no, const char* what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(line_no, std::string("invalid ") + what + " '" + std::string(field) + "'");
  return value;
}

Span parse_span(std::string_view field, std::size_t line_no) {
  const auto colon = field.find(':');
  if (colon == std::string_view::npos) throw ParseError(line_no, "span '" + std::string(field) + "' lacks ':'");
  return Span{parse_int(field.substr(0, colon), line_no, "span start"),
              parse_int(field.substr(colon + 1), line_no, "span end")};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Corpus parse_conll(std::string_view text, Task task, std::shared_ptr<Vocabularies> vocabs, Split split) {
  if (!vocabs) vocabs = std::make_shared<Vocabularies>();
  Corpus corpus;
  corpus.task = task;
  corpus.split = split;
  corpus.vocabs = vocabs;

  Sentence current;
  std::vector<std::size_t> head_lines;
  std::size_t sentence_start_line = 0;
  std::optional<std::string> pending_id;
  std::set<std::string> seen_ids;

  auto flush = [&] {
    if (current.tokens.empty()) {
      if (!current.relations.empty())
        throw ParseError(sentence_start_line, "relation lines without tokens");
      pending_id.reset();
      return;
    }
    current.id = pending_id ? *pending_id : "s" + std::to_string(corpus.sentences.size() + 1);
    pending_id.reset();
    if (!seen_ids.insert(current.id).second) throw StructureError("duplicate sentence id '" + current.id + "'");
    const int n = static_cast<int>(current.tokens.size());
    for (std::size_t i = 0; i < current.tokens.size(); ++i) {
      const int h = current.tokens[i].head;
      if (h != kRoot && (h < 0 || h >= n))
        throw ParseError(head_lines[i], "head " + std::to_string(h + 1) + " outside sentence of length " +
                                            std::to_string(n));
    }
    validate_sentence(current);
    corpus.sentences.push_back(std::move(current));
    current = Sentence{};
    head_lines.clear();
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (current.tokens.empty() && current.relations.empty() && !pending_id) sentence_start_line = line_no;
    if (line.front() == '#') {
      if (line.rfind("#rel", 0) == 0) {
        auto fields = split_tabs(line);
        if (fields.size() != 4 || fields[0] != "#rel")
          throw ParseError(line_no, "relation line needs '#rel<TAB>h:h<TAB>t:t<TAB>label'");
        Relation rel{parse_span(fields[1], line_no), parse_span(fields[2], line_no),
                     vocabs->labels.add(fields[3])};
        current.relations.push_back(rel);
      } else {
        std::string_view body = trim(line.substr(1));
        if (body.rfind("id", 0) == 0) {
          body = trim(body.substr(2));
          if (!body.empty() && body.front() == '=') body = trim(body.substr(1));
          if (body.empty()) throw ParseError(line_no, "empty sentence id");
          pending_id = std::string(body);
        }
      }
      continue;
    }

    auto fields = split_tabs(line);
    if (fields.size() != 7)
      throw ParseError(line_no, "expected 7 tab-separated columns, got " + std::to_string(fields.size()));
    const int id = parse_int(fields[0], line_no, "token id");
    if (id != static_cast<int>(current.tokens.size()) + 1)
      throw ParseError(line_no, "token id " + std::to_string(id) + " out of sequence");
    if (fields[1].empty()) throw ParseError(line_no, "empty FORM");
    Token tok;
    tok.form = std::string(fields[1]);
    tok.word = vocabs->words.add(fields[1]);
    tok.pos = vocabs->pos.add(fields[2]);
    const int head = parse_int(fields[3], line_no, "head");
    if (head < 0) throw ParseError(line_no, "negative head");
    tok.head = head == 0 ? kRoot : head - 1;
    tok.deprel = vocabs->deprels.add(fields[4]);
    if (fields[5] != "_") tok.ner = vocabs->ner.add(fields[5]);
    if (task == Task::RE) {
      tok.gold = -1;
    } else {
      if (fields[6] == "_") throw ParseError(line_no, "GOLD column required for task " + std::string(to_string(task)));
      tok.gold = vocabs->labels.add(fields[6]);
    }
    current.tokens.push_back(std::move(tok));
    head_lines.push_back(line_no);
  }
  flush();
  if (corpus.sentences.empty()) throw ParseError(line_no, "no sentences found");
  return corpus;
}

Corpus parse_conll(std::string_view text, Task task) {
  return parse_conll(text, task, std::make_shared<Vocabularies>(), Split::Train);
}

std::string serialize_conll(const Corpus& corpus) {
  const Vocabularies& v = *corpus.vocabs;
  std::ostringstream out;
  for (const auto& s : corpus.sentences) {
    out << "# id = " << s.id << '\n';
    for (const auto& r : s.relations) {
      out << "#rel\t" << r.head.begin << ':' << r.head.end << '\t' << r.tail.begin << ':' << r.tail.end << '\t'
          << v.labels.at(r.label) << '\n';
    }
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const Token& t = s.tokens[i];
      out << (i + 1) << '\t' << t.form << '\t' << v.pos.at(t.pos) << '\t' << (t.head == kRoot ? 0 : t.head + 1)
          << '\t' << v.deprels.at(t.deprel) << '\t' << (t.ner ? v.ner.at(*t.ner) : std::string("_")) << '\t'
          << (t.gold >= 0 ? v.labels.at(t.gold) : std::string("_")) << '\n';
    }
    out << '\n';
  }
  return out.str();
}

Corpus read_conll_file(const std::filesystem::path& path, Task task, std::shared_ptr<Vocabularies> vocabs,
                       Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conll(buf.str(), task, std::move(vocabs), split);
}

void write_conll_file(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write corpus " + path.string());
  out << serialize_conll(corpus);
}

// ---------------------------------------------------------------------------
// Tags, classes, buckets

TagParts split_tag(std::string_view tag) {
  if (tag.size() >= 3 && tag[1] == '-') {
    TagParts parts;
    parts.type = std::string(tag.substr(2));
    switch (tag[0]) {
      case 'B': parts.prefix = TagPrefix::B; return parts;
      case 'I': parts.prefix = TagPrefix::I; return parts;
      case 'E': parts.prefix = TagPrefix::E; return parts;
      case 'S': parts.prefix = TagPrefix::S; return parts;
      default: break;
    }
  }
  return TagParts{};
}

std::vector<std::string> class_inventory(const Vocabularies& vocabs, Task task) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& label : vocabs.labels.tokens()) {
    std::string cls;
    if (task == Task::RE) {
      cls = label;
    } else {
      auto parts = split_tag(label);
      if (parts.prefix == TagPrefix::O) continue;
      cls = parts.type;
    }
    if (seen.insert(cls).second) out.push_back(cls);
  }
  return out;
}

std::map<std::string, std::size_t> count_instances(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  const Vocab& labels = corpus.vocabs->labels;
  for (const auto& s : corpus.sentences) {
    if (corpus.task == Task::RE) {
      for (const auto& r : s.relations) ++counts[labels.at(r.label)];
      continue;
    }
    for (const auto& t : s.tokens) {
      auto parts = split_tag(labels.at(t.gold));
      if (parts.prefix == TagPrefix::B || parts.prefix == TagPrefix::S) ++counts[parts.type];
    }
  }
  return counts;
}

std::string_view to_string(Bucket bucket) {
  switch (bucket) {
    case Bucket::Few: return "Few";
    case Bucket::Medium: return "Medium";
    case Bucket::Many: return "Many";
  }
  return "?";
}

std::optional<Bucket> BucketSplit::bucket_of(std::string_view cls) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == cls) return assignment[i];
  return std::nullopt;
}

std::vector<std::size_t> BucketSplit::members(Bucket bucket) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == bucket) out.push_back(i);
  return out;
}

BucketSplit compute_buckets(const std::map<std::string, std::size_t>& counts,
                            const std::vector<std::string>& classes, BucketThresholds thresholds) {
  if (thresholds.few_max > thresholds.medium_max)
    throw ConfigError("bucket thresholds need few_max <= medium_max");
  BucketSplit split;
  split.thresholds = thresholds;
  for (const auto& cls : classes) {
    auto it = counts.find(cls);
    const std::size_t n = it == counts.end() ? 0 : it->second;
    split.classes.push_back(cls);
    split.counts.push_back(n);
    if (n == 0) split.warnings.push_back("class '" + cls + "' has no training instances; assigned Few");
    if (n <= thresholds.few_max)
      split.assignment.push_back(Bucket::Few);
    else if (n <= thresholds.medium_max)
      split.assignment.push_back(Bucket::Medium);
    else
      split.assignment.push_back(Bucket::Many);
  }
  return split;
}

BucketSplit compute_buckets(const std::map<std::string, std::size_t>& counts, BucketThresholds thresholds) {
  std::vector<std::string> classes;
  for (const auto& [cls, n] : counts) classes.push_back(cls);
  return compute_buckets(counts, classes, thresholds);
}

BucketSplit compute_buckets(const Corpus& train, BucketThresholds thresholds) {
  return compute_buckets(count_instances(train), class_inventory(*train.vocabs, train.task), thresholds);
}

}  // namespace cfie
