#include "mde/core/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mde/core/errors.hpp"
#include "mde/core/rng.hpp"
#include "mde/core/types.hpp"

namespace mde {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.size() < 2)
        throw Error("vocabulary needs at least the two reserved special tokens");
    for (int i = 0; i < static_cast<int>(words_.size()); ++i)
        index_[words_[static_cast<std::size_t>(i)]] = i;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open vocabulary file: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        words.push_back(line);
    }
    return Vocabulary(std::move(words));
}

Vocabulary Vocabulary::toy_default() {
    return Vocabulary({"<bos>", "<eos>", "a", "and", "red", "green", "blue", "yellow",
                       "circle", "square", "triangle"});
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write vocabulary file: " + path);
    for (const auto& w : words_)
        out << w << "\n";
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end())
        throw UnknownWordError(word);
    return it->second;
}

bool Vocabulary::contains(const std::string& word) const {
    return index_.count(word) != 0;
}

const std::string& Vocabulary::word_of(int id) const {
    if (id < 0 || id >= size())
        throw Error("token id out of range: " + std::to_string(id));
    return words_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& w : words_) {
        for (char c : w) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0x0a;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<int> Vocabulary::tokenize(const std::string& prompt) const {
    std::vector<int> ids{kBosId};
    std::istringstream ss(prompt);
    std::string word;
    while (ss >> word)
        ids.push_back(id_of(word));
    ids.push_back(kEosId);
    return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (is_special_token(id))
            continue;
        if (!out.empty())
            out += ' ';
        out += word_of(id);
    }
    return out;
}

TokenAlignment align_tokens(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids) {
    if (src_ids.empty() || tgt_ids.empty())
        throw Error("align_tokens requires non-empty id sequences");

    const int ns = static_cast<int>(src_ids.size());
    const int nt = static_cast<int>(tgt_ids.size());

    // dp[i][j] = LCS length of src[i:], tgt[j:].
    std::vector<std::vector<int>> dp(static_cast<std::size_t>(ns) + 1,
                                     std::vector<int>(static_cast<std::size_t>(nt) + 1, 0));
    for (int i = ns - 1; i >= 0; --i) {
        for (int j = nt - 1; j >= 0; --j) {
            if (src_ids[i] == tgt_ids[j])
                dp[i][j] = dp[i + 1][j + 1] + 1;
            else
                dp[i][j] = std::max(dp[i + 1][j], dp[i][j + 1]);
        }
    }

    TokenAlignment out;
    out.src_ids = src_ids;
    out.tgt_ids = tgt_ids;

    // Front-to-back reconstruction keeps the earliest matching positions;
    // on dp ties the source side advances first, which makes the pairing
    // deterministic for repeated tokens.
    int i = 0, j = 0;
    std::vector<bool> tgt_matched(static_cast<std::size_t>(nt), false);
    while (i < ns && j < nt) {
        if (src_ids[i] == tgt_ids[j] && dp[i][j] == dp[i + 1][j + 1] + 1) {
            out.shared.emplace_back(i, j);
            tgt_matched[static_cast<std::size_t>(j)] = true;
            ++i;
            ++j;
        } else if (dp[i + 1][j] >= dp[i][j + 1]) {
            ++i;
        } else {
            ++j;
        }
    }
    for (int t = 0; t < nt; ++t)
        if (!tgt_matched[static_cast<std::size_t>(t)])
            out.new_tokens.push_back(t);
    out.validate();
    return out;
}

}  // namespace mde
