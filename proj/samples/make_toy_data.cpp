// Writes a small interactions file plus item catalog in the JSON-lines input
// format. The next item after two events in the same month is determined by
// their day gap, so models that read intervals do measurably better.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "json.hpp"

#include "convrec/data/synthetic.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path dir = argc > 1 ? argv[1] : "samples/data";
  fs::create_directories(dir);

  convrec::data::synthetic::IntervalSignalOptions o;
  o.users = 200;
  o.gaps = 27;
  o.fillers = 120;
  o.length = 9;
  o.seed = 7;

  std::ofstream interactions(dir / "toy_interactions.jsonl");
  for (const auto& r : convrec::data::synthetic::interval_signal_sequences(o)) {
    nlohmann::ordered_json j;
    j["user"] = r.user;
    j["item"] = r.item;
    j["ts"] = r.timestamp;
    interactions << j.dump() << "\n";
  }

  const auto catalog = convrec::data::synthetic::interval_signal_catalog(o);
  std::vector<std::string> keys;
  for (const auto& [key, attrs] : catalog) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  std::ofstream items(dir / "toy_items.jsonl");
  for (const auto& key : keys) {
    nlohmann::ordered_json j;
    j["item"] = key;
    j["attrs"] = catalog.at(key);
    items << j.dump() << "\n";
  }
  std::cout << "wrote " << (dir / "toy_interactions.jsonl").string() << " and " << (dir / "toy_items.jsonl").string()
            << "\n";
}
