#include "dataset/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace elcorec::data {
namespace {

constexpr std::int64_t kEpoch = 978307200;  // 2001-01-01 UTC
constexpr double kDay = 86400.0;

const char* const kAdjectives[] = {"Silent", "Crimson", "Hidden",  "Broken", "Golden", "Last",   "Frozen", "Wild",
                                   "Secret", "Distant", "Burning", "Lonely", "Iron",   "Velvet", "Hollow", "Bright",
                                   "Savage", "Gentle",  "Midnight", "Lost",  "Electric", "Quiet", "Scarlet", "Endless"};
const char* const kNouns[] = {"Harbor", "Garden",  "Empire",  "River",  "Station", "Kingdom", "Mirror", "Highway",
                              "Orchard", "Frontier", "Circus", "Lagoon", "Tower",   "Voyage",  "Canyon", "Letter",
                              "Island", "Summer",  "Machine", "Witness", "Horizon", "Ballad",  "Harvest", "Signal"};
const char* const kGenres[] = {"Action",  "Comedy",  "Drama",   "Horror",  "Romance", "Thriller",
                               "Western", "Musical", "Mystery", "Fantasy", "Crime",   "Animation"};
const char* const kAges[] = {"under 18", "18-24", "25-34", "35-44", "45-49", "50-55", "56+"};
const char* const kOccupations[] = {"student", "engineer", "artist",  "doctor", "writer",
                                    "lawyer",  "educator", "retired", "sales",  "programmer"};

std::string genre_name(std::size_t g) {
  return g < std::size(kGenres) ? kGenres[g] : "Genre" + std::to_string(g + 1);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

nlohmann::ordered_json SynthConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_users"] = n_users;
  j["n_items"] = n_items;
  j["n_genres"] = n_genres;
  j["horizon_days"] = horizon_days;
  j["interactions_per_user"] = interactions_per_user;
  j["a"] = a;
  j["b"] = b;
  j["c"] = c;
  j["bias"] = bias;
  j["decay_days"] = decay_days;
  j["window"] = window;
  j["seed"] = seed;
  return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig s;
  s.n_users = j.value("n_users", s.n_users);
  s.n_items = j.value("n_items", s.n_items);
  s.n_genres = j.value("n_genres", s.n_genres);
  s.horizon_days = j.value("horizon_days", s.horizon_days);
  s.interactions_per_user = j.value("interactions_per_user", s.interactions_per_user);
  s.a = j.value("a", s.a);
  s.b = j.value("b", s.b);
  s.c = j.value("c", s.c);
  s.bias = j.value("bias", s.bias);
  s.decay_days = j.value("decay_days", s.decay_days);
  s.window = j.value("window", s.window);
  s.seed = j.value("seed", s.seed);
  return s;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.n_users < 2 || cfg.n_items < 2 || cfg.n_genres < 2 || cfg.interactions_per_user < 2)
    throw InvalidArgumentError("synthetic generator needs every count >= 2");
  if (!(cfg.horizon_days > 0.0)) throw InvalidArgumentError("horizon must be positive");

  SynthDataset out;
  out.config = cfg;
  out.data.schema = synthetic_schema();
  Rng rng(cfg.seed);
  auto& lat = out.latents;

  std::vector<std::string> titles;
  for (const char* a : kAdjectives)
    for (const char* n : kNouns) titles.push_back(std::string(a) + " " + n);
  rng.shuffle(titles);

  lat.item_quality.resize(cfg.n_items);
  lat.item_genre.resize(cfg.n_items);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    lat.item_quality[i] = rng.normal();
    lat.item_genre[i] = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(cfg.n_genres) - 1));
    std::string title = titles[i % titles.size()];
    if (i >= titles.size()) title += " " + std::to_string(i / titles.size() + 1);
    const auto year = std::to_string(rng.integer(1960, 2019));
    out.data.catalog.add_item({std::to_string(i + 1), title, {{"genre", {genre_name(lat.item_genre[i])}}, {"year", {year}}}});
  }

  lat.user_pref.assign(cfg.n_users, std::vector<double>(cfg.n_genres));
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    for (auto& p : lat.user_pref[u]) p = rng.normal();
    const char* age = kAges[rng.integer(0, std::size(kAges) - 1)];
    const char* occ = kOccupations[rng.integer(0, std::size(kOccupations) - 1)];
    out.data.catalog.add_user({std::to_string(u + 1), {{"age", {age}}, {"occupation", {occ}}}});
  }

  const auto horizon_s = static_cast<std::int64_t>(cfg.horizon_days * kDay);
  std::vector<std::size_t> pool(cfg.n_items);
  struct Past {
    std::size_t genre;
    int rating;
    std::int64_t ts;
  };
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const auto lo = static_cast<std::int64_t>(cfg.interactions_per_user / 2);
    const auto hi = static_cast<std::int64_t>(cfg.interactions_per_user * 3 / 2);
    std::size_t n = static_cast<std::size_t>(rng.integer(std::max<std::int64_t>(lo, 2), hi));

    // Distinct items while the catalogue allows it.
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::vector<std::size_t> items(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (k < pool.size()) {
        const auto j = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(k), static_cast<std::int64_t>(pool.size()) - 1));
        std::swap(pool[k], pool[j]);
        items[k] = pool[k];
      } else {
        items[k] = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(cfg.n_items) - 1));
      }
    }
    std::vector<std::int64_t> ts(n);
    for (auto& t : ts) t = kEpoch + rng.integer(0, horizon_s);
    std::sort(ts.begin(), ts.end());
    for (std::size_t k = 1; k < n; ++k) ts[k] = std::max(ts[k], ts[k - 1] + 1);

    std::vector<Past> past;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t item = items[k];
      const std::size_t g = lat.item_genre[item];
      double num = 0.0, den = 0.0;
      const std::size_t first = past.size() > cfg.window ? past.size() - cfg.window : 0;
      for (std::size_t j = first; j < past.size(); ++j) {
        if (past[j].genre != g) continue;
        const double w = cfg.decay_days > 0 ? std::exp(-static_cast<double>(ts[k] - past[j].ts) / kDay / cfg.decay_days) : 1.0;
        num += w * (past[j].rating - 3);
        den += w;
      }
      const double s = den > 0.0 ? num / den : 0.0;
      const double p = sigmoid(cfg.bias + cfg.a * lat.user_pref[u][g] + cfg.b * s + cfg.c * lat.item_quality[item]);
      const bool click = rng.bernoulli(p);
      const int rating = click ? static_cast<int>(rng.integer(4, 5)) : static_cast<int>(rng.integer(1, 3));
      past.push_back({g, rating, ts[k]});
      lat.planted_prob.push_back(p);
      out.data.records.push_back({std::to_string(u + 1), std::to_string(item + 1), rating, ts[k], out.data.records.size()});
    }
  }
  return out;
}

void write_synth(const SynthDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw IoError("cannot write '" + (fs::path(dir) / name).string() + "'");
    return f;
  };
  {
    auto f = open("interactions.tsv");
    f << "user_id\titem_id\trating\ttimestamp\n";
    for (const auto& r : ds.data.records) f << r.user_id << '\t' << r.item_id << '\t' << r.rating << '\t' << r.timestamp << '\n';
  }
  {
    auto f = open("items.tsv");
    f << "item_id\ttitle\tgenre\tyear\n";
    for (const auto& it : ds.data.catalog.items)
      f << it->id << '\t' << it->title << '\t' << it->features[0].values[0] << '\t' << it->features[1].values[0] << '\n';
  }
  {
    auto f = open("users.tsv");
    f << "user_id\tage\toccupation\n";
    for (const auto& u : ds.data.catalog.users) f << u->id << '\t' << u->features[0].values[0] << '\t' << u->features[1].values[0] << '\n';
  }
  open("schema.json") << ds.data.schema.to_json().dump(2) << '\n';
  nlohmann::ordered_json lat;
  lat["config"] = ds.config.to_json();
  lat["item_quality"] = ds.latents.item_quality;
  lat["item_genre"] = ds.latents.item_genre;
  lat["user_pref"] = ds.latents.user_pref;
  lat["planted_prob"] = ds.latents.planted_prob;
  open("latents.json") << lat.dump() << '\n';
}

std::vector<double> read_planted_prob(const std::string& latents_path) {
  std::ifstream in(latents_path);
  if (!in) throw IoError("cannot open '" + latents_path + "'");
  try {
    return nlohmann::json::parse(in).at("planted_prob").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(latents_path + ": " + e.what());
  }
}

}  // namespace elcorec::data
