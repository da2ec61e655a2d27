// Line-oriented summarizer used by the tests. Echoes the leading signal tokens.
//   stub_summarizer [echo|overflow|malformed|silent|crash]
#include <chrono>
#include <iostream>
#include <json.hpp>
#include <string>
#include <thread>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  std::string line;
  while (std::getline(std::cin, line)) {
    if (mode == "crash") return 3;
    if (mode == "silent") {
      std::this_thread::sleep_for(std::chrono::seconds(5));
      continue;
    }
    if (mode == "malformed") {
      std::cout << "{not json" << std::endl;
      continue;
    }
    const auto request = nlohmann::json::parse(line);
    auto cap = request.at("token_cap").get<std::size_t>();
    if (mode == "overflow") cap += 3;
    nlohmann::json tokens = nlohmann::json::array();
    const auto& signal = request.at("signal");
    for (std::size_t i = 0; i < signal.size() && tokens.size() < cap; ++i) tokens.push_back(signal[i]);
    while (tokens.size() < cap && mode == "overflow") tokens.push_back(0);
    std::cout << nlohmann::json{{"tokens", tokens}}.dump() << std::endl;
  }
  return 0;
}
