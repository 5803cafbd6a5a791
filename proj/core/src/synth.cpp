#include "mipic/synth.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "mipic/errors.hpp"

namespace mipic::synth {

namespace {

// Each slot holds three synonym groups of two words.
using Group = std::array<const char*, 2>;
using Slot = std::array<Group, 3>;

struct Family {
    std::string name;
    Slot agent;
    Slot action;
    Slot object;
};

const std::vector<Family>& families() {
    static const std::vector<Family> kFamilies = {
        {"cooking",
         {{{"chef", "cook"}, {"baker", "confectioner"}, {"waiter", "server"}}},
         {{{"stir", "mix"}, {"bake", "roast"}, {"slice", "chop"}}},
         {{{"soup", "broth"}, {"bread", "loaf"}, {"onion", "shallot"}}}},
        {"sports",
         {{{"striker", "forward"}, {"goalie", "keeper"}, {"coach", "trainer"}}},
         {{{"kick", "boot"}, {"block", "stop"}, {"pass", "feed"}}},
         {{{"ball", "football"}, {"net", "goalmouth"}, {"whistle", "horn"}}}},
        {"weather",
         {{{"storm", "tempest"}, {"wind", "gale"}, {"cloud", "nimbus"}}},
         {{{"soak", "drench"}, {"batter", "pound"}, {"cool", "chill"}}},
         {{{"valley", "dale"}, {"coast", "shore"}, {"village", "hamlet"}}}},
        {"music",
         {{{"singer", "vocalist"}, {"drummer", "percussionist"}, {"pianist", "keyboardist"}}},
         {{{"perform", "play"}, {"compose", "write"}, {"rehearse", "practice"}}},
         {{{"song", "tune"}, {"melody", "refrain"}, {"concerto", "sonata"}}}},
        {"travel",
         {{{"tourist", "traveler"}, {"pilot", "aviator"}, {"guide", "escort"}}},
         {{{"visit", "tour"}, {"board", "enter"}, {"book", "reserve"}}},
         {{{"museum", "gallery"}, {"flight", "plane"}, {"hotel", "inn"}}}},
        {"finance",
         {{{"banker", "financier"}, {"investor", "backer"}, {"auditor", "accountant"}}},
         {{{"buy", "purchase"}, {"sell", "trade"}, {"audit", "inspect"}}},
         {{{"stock", "share"}, {"bond", "debenture"}, {"ledger", "account"}}}},
        {"medicine",
         {{{"doctor", "physician"}, {"nurse", "caregiver"}, {"surgeon", "operator"}}},
         {{{"treat", "heal"}, {"examine", "check"}, {"operate", "cut"}}},
         {{{"patient", "invalid"}, {"wound", "injury"}, {"fever", "temperature"}}}},
        {"gardening",
         {{{"gardener", "grower"}, {"farmer", "planter"}, {"florist", "horticulturist"}}},
         {{{"water", "irrigate"}, {"prune", "trim"}, {"plant", "sow"}}},
         {{{"rose", "bloom"}, {"hedge", "shrub"}, {"seedling", "sprout"}}}},
        {"computing",
         {{{"programmer", "coder"}, {"engineer", "developer"}, {"admin", "sysadmin"}}},
         {{{"compile", "build"}, {"debug", "fix"}, {"deploy", "ship"}}},
         {{{"program", "application"}, {"database", "datastore"}, {"kernel", "core"}}}},
        {"astronomy",
         {{{"astronomer", "stargazer"}, {"telescope", "observatory"}, {"rocket", "spacecraft"}}},
         {{{"observe", "watch"}, {"photograph", "image"}, {"orbit", "circle"}}},
         {{{"planet", "world"}, {"comet", "asteroid"}, {"galaxy", "nebula"}}}},
    };
    return kFamilies;
}

constexpr std::array<Group, 4> kQualities = {{{"big", "large"}, {"small", "tiny"}, {"old", "ancient"}, {"new", "modern"}}};

// {A} agent, {V} action, {O} object, {Q} quality.
constexpr std::array<const char*, 4> kSkeletons = {
    "the {A} will {V} the {O} tomorrow",
    "yesterday a {Q} {A} tried to {V} some {O}",
    "why does every {A} {V} that {Q} {O}",
    "people say the {O} can help any {A} {V} quickly",
};

// Group and synonym choice for every slot.
struct Filling {
    std::size_t family = 0;
    std::array<std::size_t, 4> group{};  // A, V, O, Q
    std::array<std::size_t, 4> word{};
};

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

Filling random_filling(std::mt19937_64& rng, std::size_t family) {
    Filling f;
    f.family = family;
    for (std::size_t s = 0; s < 4; ++s) {
        f.group[s] = pick(rng, s == 3 ? kQualities.size() : 3);
        f.word[s] = pick(rng, 2);
    }
    return f;
}

GeneratedSentence render(const Filling& f, std::size_t skeleton) {
    const Family& fam = families()[f.family];
    std::istringstream in(kSkeletons[skeleton]);
    std::string word, text;
    while (in >> word) {
        if (word == "{A}") {
            word = fam.agent[f.group[0]][f.word[0]];
        } else if (word == "{V}") {
            word = fam.action[f.group[1]][f.word[1]];
        } else if (word == "{O}") {
            word = fam.object[f.group[2]][f.word[2]];
        } else if (word == "{Q}") {
            word = kQualities[f.group[3]][f.word[3]];
        }
        if (!text.empty()) text += ' ';
        text += word;
    }
    return {text, f.family, f.family * kSkeletons.size() + skeleton};
}

bool uses_quality(std::size_t skeleton) { return std::string_view(kSkeletons[skeleton]).find("{Q}") != std::string_view::npos; }

// Same template, at least one used slot swapped for its synonym.
Filling paraphrase(const Filling& f, std::size_t skeleton, std::mt19937_64& rng) {
    Filling out = f;
    const std::size_t slots = uses_quality(skeleton) ? 4 : 3;
    bool changed = false;
    for (std::size_t s = 0; s < slots; ++s) {
        if (rng() & 1U) {
            out.word[s] ^= 1U;
            changed = true;
        }
    }
    if (!changed) out.word[pick(rng, slots)] ^= 1U;
    return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt_score(double s) {
    std::ostringstream o;
    o << s;
    return o.str();
}

}  // namespace

std::size_t family_count() { return families().size(); }
std::size_t templates_per_family() { return kSkeletons.size(); }
const std::string& family_name(std::size_t family) { return families().at(family).name; }

std::vector<std::string> vocabulary() {
    std::set<std::string> words;
    for (const char* s : kSkeletons) {
        std::istringstream in(s);
        std::string w;
        while (in >> w) {
            if (w.front() != '{') words.insert(w);
        }
    }
    auto add_slot = [&](const auto& slot) {
        for (const auto& g : slot) words.insert(g.begin(), g.end());
    };
    for (const auto& f : families()) {
        add_slot(f.agent);
        add_slot(f.action);
        add_slot(f.object);
    }
    add_slot(kQualities);
    return {words.begin(), words.end()};
}

Suite generate(const SynthOptions& options) {
    std::mt19937_64 rng(options.seed);
    const std::size_t families_n = family_count();
    const std::size_t skeletons = kSkeletons.size();
    Suite suite;

    std::set<std::string> train_text;
    for (std::size_t fam = 0; fam < families_n; ++fam) {
        for (std::size_t sk = 0; sk < skeletons; ++sk) {
            std::size_t made = 0;
            for (std::size_t tries = 0; made < options.train_per_template && tries < 1000; ++tries) {
                auto s = render(random_filling(rng, fam), sk);
                if (train_text.insert(s.text).second) {
                    suite.train.push_back(std::move(s));
                    ++made;
                }
            }
        }
    }
    // Interleave families so the corpus is not sorted by topic.
    std::shuffle(suite.train.begin(), suite.train.end(), rng);

    for (std::size_t grade = 0; grade < 3; ++grade) {
        for (std::size_t i = 0; i < options.sts_pairs_per_grade; ++i) {
            const std::size_t fam = pick(rng, families_n);
            const std::size_t sk = pick(rng, skeletons);
            const Filling f = random_filling(rng, fam);
            ScoredPair p;
            p.first = render(f, sk);
            if (grade == 0) {
                p.second = render(paraphrase(f, sk, rng), sk);
                p.score = 1.0;
            } else if (grade == 1) {
                const std::size_t other = (sk + 1 + pick(rng, skeletons - 1)) % skeletons;
                p.second = render(f, other);
                p.score = 0.5;
            } else {
                const std::size_t other_fam = (fam + 1 + pick(rng, families_n - 1)) % families_n;
                p.second = render(random_filling(rng, other_fam), pick(rng, skeletons));
                p.score = 0.0;
            }
            suite.sts.push_back(std::move(p));
        }
    }
    std::shuffle(suite.sts.begin(), suite.sts.end(), rng);

    for (int label = 1; label >= 0; --label) {
        for (std::size_t i = 0; i < options.pair_examples_per_label; ++i) {
            const std::size_t fam = pick(rng, families_n);
            const std::size_t sk = pick(rng, skeletons);
            const Filling f = random_filling(rng, fam);
            LabeledPair p;
            p.first = render(f, sk);
            p.label = label;
            if (label == 1) {
                p.second = render(paraphrase(f, sk, rng), sk);
            } else {
                const std::size_t other_fam = (fam + 1 + pick(rng, families_n - 1)) % families_n;
                p.second = render(random_filling(rng, other_fam), pick(rng, skeletons));
            }
            suite.pairs.push_back(std::move(p));
        }
    }
    std::shuffle(suite.pairs.begin(), suite.pairs.end(), rng);

    auto labeled = [&](std::size_t per_family) {
        std::vector<GeneratedSentence> out;
        for (std::size_t fam = 0; fam < families_n; ++fam) {
            for (std::size_t i = 0; i < per_family; ++i) out.push_back(render(random_filling(rng, fam), pick(rng, skeletons)));
        }
        std::shuffle(out.begin(), out.end(), rng);
        return out;
    };
    suite.cls_train = labeled(options.cls_train_per_family);
    suite.cls_test = labeled(options.cls_test_per_family);
    return suite;
}

std::vector<std::filesystem::path> write_suite(const Suite& suite, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const char* name, const std::vector<std::string>& lines) {
        written.push_back(directory / name);
        write_lines(written.back(), lines);
    };

    std::vector<std::string> lines;
    for (const auto& s : suite.train) lines.push_back(s.text);
    emit("train.txt", lines);

    lines.clear();
    for (const auto& p : suite.sts) lines.push_back(p.first.text + '\t' + p.second.text + '\t' + fmt_score(p.score));
    emit("sts.tsv", lines);

    lines.clear();
    for (const auto& p : suite.pairs) lines.push_back(p.first.text + '\t' + p.second.text + '\t' + std::to_string(p.label));
    emit("pairs.tsv", lines);

    lines.clear();
    for (const auto& s : suite.cls_train) lines.push_back(s.text + '\t' + family_name(s.family));
    emit("cls_train.tsv", lines);

    lines.clear();
    for (const auto& s : suite.cls_test) lines.push_back(s.text + '\t' + family_name(s.family));
    emit("cls_test.tsv", lines);
    return written;
}

}  // namespace mipic::synth
