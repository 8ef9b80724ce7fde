// curate: command-line front end for the corpus curation toolkit.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "curate/corpus_io.hpp"
#include "curate/curation.hpp"
#include "curate/dedup.hpp"
#include "curate/domain_classifier.hpp"
#include "curate/evalkit.hpp"
#include "curate/ngram_lm.hpp"
#include "curate/param_merge.hpp"
#include "curate/pipeline.hpp"
#include "curate/quality_filters.hpp"

namespace fs = std::filesystem;
using namespace curate;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string report;
  unsigned threads = 1;
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(path + " is not valid JSON");
  return j;
}

std::string read_text(const std::string& path) {
  if (path == "-") {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json config_or_empty(const Globals& g) {
  return g.config.empty() ? nlohmann::json::object() : load_json(g.config);
}

void emit_report(const Globals& g, const nlohmann::json& report) {
  if (g.report.empty()) {
    std::cout << report.dump(2) << "\n";
    return;
  }
  std::ofstream os(g.report, std::ios::binary);
  if (!os) throw Error("cannot write report " + g.report);
  os << report.dump(2) << "\n";
}

std::vector<Document> read_docs(const std::string& path, nlohmann::json* report = nullptr) {
  auto r = read_jsonl(path);
  if (!r.malformed.empty()) {
    std::cerr << path << ": skipped " << r.skipped << " malformed line(s)\n";
  }
  if (report) {
    (*report)["malformed"] = nlohmann::json::array();
    for (const auto& m : r.malformed) (*report)["malformed"].push_back({{"line", m.line_number}, {"reason", m.reason}});
  }
  return std::move(r.docs);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  const std::string text = read_text(path);
  for (auto line : split_lines(text)) {
    if (!trim(line).empty()) out.emplace_back(trim(line));
  }
  return out;
}

std::unique_ptr<Completer> client_from_config(const std::string& path) {
  return std::make_unique<HttpCompletionClient>(ClientConfig::from_json(load_json(path)));
}

// ---------------------------------------------------------------------------

void add_ingest(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("ingest", "Validate and normalize a JSONL corpus (optionally converting HTML)");
  auto input = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  auto html = std::make_shared<bool>(false);
  cmd->add_option("-i,--input", *input, "Input JSONL")->required();
  cmd->add_option("-o,--output", *output, "Output JSONL")->required();
  cmd->add_flag("--html", *html, "Treat content as HTML and convert it to Markdown");
  cmd->callback([=, &g] {
    nlohmann::json report;
    auto docs = read_docs(*input, &report);
    std::size_t empty_after_html = 0;
    std::vector<Document> out;
    for (auto& d : docs) {
      if (*html) d.content = html_to_markdown(d.content);
      if (d.content.empty()) {
        ++empty_after_html;
        continue;
      }
      out.push_back(std::move(d));
    }
    report["written"] = write_jsonl(out, *output);
    report["skipped"] = report["malformed"].size();
    report["empty_after_conversion"] = empty_after_html;
    emit_report(g, report);
  });
}

void add_html2md(CLI::App& app) {
  auto* cmd = app.add_subcommand("html2md", "Convert an HTML file to Markdown");
  auto input = std::make_shared<std::string>("-");
  auto output = std::make_shared<std::string>();
  cmd->add_option("input", *input, "HTML file, or - for stdin");
  cmd->add_option("-o,--output", *output, "Output file (default stdout)");
  cmd->callback([=] {
    const auto md = html_to_markdown(read_text(*input));
    if (output->empty()) {
      std::cout << md << "\n";
    } else {
      std::ofstream(*output, std::ios::binary) << md << "\n";
    }
  });
}

void add_expand_categories(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("expand-categories", "Breadth-first category expansion from the graph root");
  auto graph = std::make_shared<std::string>();
  auto allow = std::make_shared<std::string>();
  auto deny = std::make_shared<std::string>();
  cmd->add_option("--graph", *graph, "Category graph JSON {root, edges}")->required();
  cmd->add_option("--allow", *allow, "File listing accepted categories, one per line");
  cmd->add_option("--deny", *deny, "File listing rejected categories; everything else is accepted");
  cmd->callback([=, &g] {
    if (!allow->empty() && !deny->empty()) throw Error("use at most one of --allow and --deny");
    const auto gr = CategoryGraph::load(*graph);
    std::set<std::string> list;
    if (!allow->empty()) {
      for (auto& s : read_lines(*allow)) list.insert(s);
    } else if (!deny->empty()) {
      for (auto& s : read_lines(*deny)) list.insert(s);
    }
    const bool use_allow = !allow->empty();
    const bool use_deny = !deny->empty();
    const auto accepted = expand_categories(gr, [&](const std::string& c) {
      if (use_allow) return list.contains(c);
      if (use_deny) return !list.contains(c);
      return true;
    });
    emit_report(g, nlohmann::json{{"root", gr.root}, {"accepted", accepted}});
  });
}

void add_filter(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("filter", "Rule-based document filtering (c4, heuristic, window)");
  auto input = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  auto ops = std::make_shared<std::vector<std::string>>();
  cmd->add_option("-i,--input", *input, "Input JSONL")->required();
  cmd->add_option("-o,--output", *output, "Output JSONL")->required();
  cmd->add_option("--op", *ops, "Filters to apply in order: c4, heuristic, window")
      ->default_val(std::vector<std::string>{"c4", "heuristic"})
      ->check(CLI::IsMember({"c4", "heuristic", "window"}));
  cmd->callback([=, &g] {
    const auto cfg = FilterConfig::from_json(config_or_empty(g));
    nlohmann::json report;
    const auto docs = read_docs(*input, &report);
    FilterReport fr;
    std::vector<Document> out;
    for (const auto& d : docs) {
      std::optional<Document> cur = d;
      FilterReport one;
      for (const auto& op : *ops) {
        FilterReport* r = &one;
        if (op == "c4") {
          cur = c4_filter(*cur, cfg, r);
        } else if (op == "heuristic") {
          cur = heuristic_filter(*cur, cfg, r);
        } else {
          cur = window_filter_doc(*cur, cfg, r);
        }
        if (!cur) break;
      }
      // Count each document once, under the first rule that removed it.
      FilterReport per_doc;
      per_doc.lines_dropped_by_rule = one.lines_dropped_by_rule;
      if (cur) {
        per_doc.keep();
        out.push_back(std::move(*cur));
      } else {
        per_doc.drop(one.docs_dropped_by_rule.begin()->first);
      }
      fr.merge(per_doc);
    }
    write_jsonl(out, *output);
    report["filter"] = fr.to_json();
    report["config"] = cfg.to_json();
    emit_report(g, report);
  });
}

Smoothing smoothing_from(const std::string& kind, double k, double discount) {
  if (kind == "kn") return Smoothing::kneser_ney(discount);
  if (kind == "add-k") return Smoothing::add_k(k);
  throw Error("unknown smoothing " + kind);
}

void add_lm(CLI::App& app, Globals& g) {
  {
    auto* cmd = app.add_subcommand("lm-train", "Train an n-gram language model");
    auto input = std::make_shared<std::vector<std::string>>();
    auto output = std::make_shared<std::string>();
    auto order = std::make_shared<int>(5);
    auto smoothing = std::make_shared<std::string>("kn");
    auto k = std::make_shared<double>(1.0);
    auto discount = std::make_shared<double>(0.75);
    cmd->add_option("-i,--input", *input, "Training JSONL file(s)")->required();
    cmd->add_option("-o,--output", *output, "Model file")->required();
    cmd->add_option("--order", *order, "N-gram order")->capture_default_str();
    cmd->add_option("--smoothing", *smoothing, "kn or add-k")
        ->check(CLI::IsMember({"kn", "add-k"}))
        ->capture_default_str();
    cmd->add_option("--k", *k, "Add-k constant")->capture_default_str();
    cmd->add_option("--discount", *discount, "Kneser-Ney discount")->capture_default_str();
    cmd->callback([=, &g] {
      NGramCounter counter(*order);
      std::size_t docs = 0;
      for (const auto& path : *input) {
        JsonlReader reader(path);
        while (auto d = reader.next()) {
          counter.add(*d);
          ++docs;
        }
      }
      const auto model = counter.build(smoothing_from(*smoothing, *k, *discount));
      model.save(fs::path(*output));
      emit_report(g, {{"documents", docs},
                      {"sentences", counter.sentences()},
                      {"tokens", counter.tokens()},
                      {"vocab", model.vocab().size()},
                      {"order", *order}});
    });
  }
  {
    auto* cmd = app.add_subcommand("lm-score", "Perplexity of every document");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto model = std::make_shared<std::string>();
    cmd->add_option("-i,--input", *input, "Input JSONL")->required();
    cmd->add_option("-m,--model", *model, "Model file")->required();
    cmd->add_option("-o,--output", *output, "Output JSONL of {url, source, perplexity} (default stdout)");
    cmd->callback([=] {
      const auto lm = NGramModel::load(fs::path(*model));
      std::ofstream file;
      if (!output->empty()) file.open(*output, std::ios::binary);
      std::ostream& os = output->empty() ? std::cout : file;
      JsonlReader reader(*input);
      while (auto d = reader.next()) {
        ordered_json row{{"url", d->url}, {"source", d->source}};
        try {
          row["perplexity"] = lm.perplexity(d->content);
        } catch (const Error&) {
          row["perplexity"] = nullptr;
        }
        os << row.dump() << "\n";
      }
    });
  }
  {
    auto* cmd = app.add_subcommand("lm-filter", "Drop documents above their source's perplexity threshold");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto model = std::make_shared<std::string>();
    auto thresholds = std::make_shared<std::string>();
    auto max_ppl = std::make_shared<double>(0.0);
    cmd->add_option("-i,--input", *input, "Input JSONL")->required();
    cmd->add_option("-o,--output", *output, "Output JSONL")->required();
    cmd->add_option("-m,--model", *model, "Model file")->required();
    cmd->add_option("--thresholds", *thresholds, "JSON {source: max_perplexity, \"*\": default}");
    cmd->add_option("--max-perplexity", *max_ppl, "Threshold for every source");
    cmd->callback([=, &g] {
      ThresholdTable table;
      if (!thresholds->empty()) table = ThresholdTable::from_json(load_json(*thresholds));
      if (*max_ppl > 0) table.set_default(*max_ppl);
      if (thresholds->empty() && !(*max_ppl > 0)) throw Error("give --thresholds or --max-perplexity");
      const auto lm = NGramModel::load(fs::path(*model));
      nlohmann::json report;
      const auto docs = read_docs(*input, &report);
      const auto res = lm_filter(docs, lm, table);
      write_jsonl(res.kept, *output);
      report["filter"] = res.report.to_json();
      emit_report(g, report);
    });
  }
}

void add_dedup(CLI::App& app, Globals& g) {
  {
    auto* cmd = app.add_subcommand("dedup", "MinHash-LSH near-duplicate removal");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto sigs = std::make_shared<std::string>();
    auto per_source = std::make_shared<bool>(false);
    cmd->add_option("-i,--input", *input, "Input JSONL")->required();
    cmd->add_option("-o,--output", *output, "Output JSONL")->required();
    cmd->add_option("--signatures", *sigs, "Also write the signature file here");
    cmd->add_flag("--per-source", *per_source, "Only compare documents from the same source");
    cmd->callback([=, &g] {
      const auto cfg = LshConfig::from_json(config_or_empty(g));
      nlohmann::json report;
      const auto docs = read_docs(*input, &report);
      const auto clusters = cluster_documents(docs, cfg, g.threads, *per_source);
      const auto res = deduplicate(docs, clusters);
      write_jsonl(res.kept, *output);
      if (!sigs->empty()) {
        const MinHasher hasher(cfg);
        std::vector<MinHashSignature> all;
        for (std::size_t i = 0; i < docs.size(); ++i) {
          const auto h = shingle_hashes(docs[i].content, cfg.shingle_size);
          if (!h.empty()) all.push_back(hasher.sign(h, i));
        }
        write_signatures(*sigs, cfg, all);
      }
      report["dedup"] = res.report.to_json();
      report["lsh"] = cfg.to_json();
      emit_report(g, report);
    });
  }
  {
    auto* cmd = app.add_subcommand("decontaminate", "Report word n-grams shared between two corpora");
    auto train = std::make_shared<std::string>();
    auto eval = std::make_shared<std::string>();
    auto n = std::make_shared<std::size_t>(13);
    auto no_matches = std::make_shared<bool>(false);
    cmd->add_option("--train", *train, "Training JSONL")->required();
    cmd->add_option("--eval", *eval, "Evaluation JSONL (documents or chat samples)")->required();
    cmd->add_option("-n", *n, "N-gram length")->capture_default_str();
    cmd->add_flag("--counts-only", *no_matches, "Omit the list of matches");
    cmd->callback([=, &g] {
      auto texts = [](const std::string& path) {
        std::vector<std::string> out;
        const std::string text = read_text(path);
        for (auto line : split_lines(text)) {
          if (trim(line).empty()) continue;
          const auto j = nlohmann::json::parse(line, nullptr, false);
          if (j.is_discarded() || !j.is_object()) continue;
          if (j.contains("content") && j["content"].is_string()) {
            out.push_back(j["content"].get<std::string>());
          } else if (j.contains("messages") && j["messages"].is_array()) {
            std::string joined;
            for (const auto& m : j["messages"]) {
              if (m.contains("content") && m["content"].is_string()) joined += m["content"].get<std::string>() + "\n";
            }
            out.push_back(joined);
          }
        }
        return out;
      };
      const auto res = ngram_overlap(texts(*train), texts(*eval), *n);
      emit_report(g, res.to_json(!*no_matches));
    });
  }
}

std::vector<std::pair<Document, double>> read_scored(const std::string& path) {
  std::vector<std::pair<Document, double>> out;
  for (auto& d : read_docs(path)) {
    if (!d.score) throw Error(path + ": document " + d.url + " has no score");
    const double s = *d.score;
    out.emplace_back(std::move(d), s);
  }
  return out;
}

void add_classifier(CLI::App& app, Globals& g) {
  {
    auto* cmd = app.add_subcommand("classify-train", "Train the relevance classifier");
    auto pos = std::make_shared<std::string>();
    auto bg = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto neg_ratio = std::make_shared<std::size_t>(10);
    auto opts = std::make_shared<TrainOptions>();
    cmd->add_option("--positives", *pos, "In-domain JSONL")->required();
    cmd->add_option("--background", *bg, "Background JSONL")->required();
    cmd->add_option("-o,--output", *out, "Model file")->required();
    cmd->add_option("--neg-ratio", *neg_ratio, "Negatives per positive")->capture_default_str();
    cmd->add_option("--epochs", opts->epochs, "SGD epochs")->capture_default_str();
    cmd->add_option("--lr", opts->learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--dim", opts->feature_dim, "Hashed feature dimension")->capture_default_str();
    cmd->add_option("--max-ngram", opts->max_ngram, "Largest word n-gram (1 or 2)")->capture_default_str();
    cmd->callback([=, &g] {
      const auto data = assemble_training_set(read_docs(*pos), read_docs(*bg), *neg_ratio, g.seed);
      TrainOptions o = *opts;
      o.seed = g.seed;
      const auto res = train_classifier(data, o);
      res.model.save(fs::path(*out));
      emit_report(g, {{"samples", data.size()}, {"train_accuracy", res.train_accuracy}});
    });
  }
  {
    auto* cmd = app.add_subcommand("classify-score", "Attach a relevance score to every document");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto model = std::make_shared<std::string>();
    cmd->add_option("-i,--input", *input, "Input JSONL")->required();
    cmd->add_option("-o,--output", *output, "Output JSONL with a score field")->required();
    cmd->add_option("-m,--model", *model, "Model file")->required();
    cmd->callback([=, &g] {
      const auto m = LinearClassifier::load(fs::path(*model));
      JsonlReader reader(*input);
      JsonlWriter writer(*output);
      std::size_t empty = 0;
      while (auto d = reader.next()) {
        const auto s = m.score(*d);
        empty += static_cast<std::size_t>(s.empty_input);
        d->score = s.value;
        writer.write(*d);
      }
      writer.close();
      emit_report(g, {{"scored", writer.count()}, {"empty_inputs", empty}, {"skipped", reader.skipped()}});
    });
  }
  {
    auto* cmd = app.add_subcommand("calibrate", "Sample score bins and measure the relevant ratio per bin");
    auto input = std::make_shared<std::string>();
    auto labels = std::make_shared<std::string>();
    auto judge = std::make_shared<std::string>();
    auto tpl = std::make_shared<std::string>();
    auto per_bin = std::make_shared<std::size_t>(50);
    auto edges = std::make_shared<std::vector<double>>(default_bin_edges());
    auto min_ratio = std::make_shared<double>(0.5);
    cmd->add_option("-i,--input", *input, "Scored JSONL (score field)")->required();
    cmd->add_option("--labels", *labels, "JSONL of {url, relevant} judgements");
    cmd->add_option("--judge", *judge, "Completion client config used as the labeler");
    cmd->add_option("--template", *tpl, "Judge prompt template with {TEXT}; the reply must start with yes/no");
    cmd->add_option("--per-bin", *per_bin, "Samples per bin")->capture_default_str();
    cmd->add_option("--edges", *edges, "Bin edges from 1 down to 0");
    cmd->add_option("--min-ratio", *min_ratio, "Also select a threshold at this ratio")->capture_default_str();
    cmd->callback([=, &g] {
      Labeler labeler;
      std::map<std::string, bool> table;
      std::unique_ptr<Completer> client;
      std::optional<StyleTemplate> prompt;
      if (!labels->empty()) {
        const std::string text = read_text(*labels);
        for (auto line : split_lines(text)) {
          if (trim(line).empty()) continue;
          const auto j = nlohmann::json::parse(line);
          table[j.at("url").get<std::string>()] = j.at("relevant").get<bool>();
        }
        labeler = [&table](const Document& d) {
          auto it = table.find(d.url);
          if (it == table.end()) throw Error("no label for " + d.url);
          return it->second;
        };
      } else if (!judge->empty()) {
        if (tpl->empty()) throw Error("--judge needs --template");
        client = client_from_config(*judge);
        prompt.emplace(Style::blog, read_text(*tpl));
        labeler = [&](const Document& d) {
          const auto reply = complete_with_retries(*client, prompt->render(d.content), RetryPolicy{});
          return to_lower(trim(reply)).rfind("yes", 0) == 0;
        };
      } else {
        throw Error("give --labels or --judge");
      }
      auto report = bin_calibration(read_scored(*input), *edges, *per_bin, labeler, g.seed);
      try {
        report.threshold_selected = select_threshold(report, *min_ratio);
      } catch (const Error& e) {
        std::cerr << "no threshold selected: " << e.what() << "\n";
      }
      emit_report(g, report.to_json());
    });
  }
  {
    auto* cmd = app.add_subcommand("select-threshold", "Pick the score threshold from a calibration report");
    auto input = std::make_shared<std::string>();
    auto min_ratio = std::make_shared<double>(0.5);
    cmd->add_option("-i,--input", *input, "Bin report JSON")->required();
    cmd->add_option("--min-ratio", *min_ratio, "Minimum relevant ratio")->capture_default_str();
    cmd->callback([=, &g] {
      auto report = BinReport::from_json(load_json(*input));
      report.threshold_selected = select_threshold(report, *min_ratio);
      emit_report(g, report.to_json());
    });
  }
}

std::vector<StyleTemplate> load_templates(const std::vector<std::string>& specs) {
  std::vector<StyleTemplate> out;
  for (const auto& spec : specs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw Error("template must be style:path, got " + spec);
    out.push_back(StyleTemplate::load(parse_style(spec.substr(0, colon)), spec.substr(colon + 1)));
  }
  return out;
}

void add_curation(CLI::App& app, Globals& g) {
  {
    auto* cmd = app.add_subcommand("augment", "Rewrite documents in a randomly chosen style and model");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto templates = std::make_shared<std::vector<std::string>>();
    auto clients = std::make_shared<std::vector<std::string>>();
    auto opts = std::make_shared<AugmentOptions>();
    cmd->add_option("-i,--input", *input, "Input JSONL")->required();
    cmd->add_option("-o,--output", *output, "Output JSONL")->required();
    cmd->add_option("--template", *templates, "style:path (blog, textbook, qa)")->required();
    cmd->add_option("--client", *clients, "Completion client config JSON")->required();
    cmd->add_option("--concurrency", opts->max_concurrency, "Requests in flight")->capture_default_str();
    cmd->add_option("--error-budget", opts->error_budget, "Failures tolerated")->capture_default_str();
    cmd->callback([=, &g] {
      const auto tpls = load_templates(*templates);
      std::vector<std::unique_ptr<HttpCompletionClient>> owned;
      std::vector<Completer*> ptrs;
      RetryPolicy retry;
      for (const auto& c : *clients) {
        auto cfg = ClientConfig::from_json(load_json(c));
        retry = {cfg.max_retries, cfg.backoff};
        owned.push_back(std::make_unique<HttpCompletionClient>(cfg));
        ptrs.push_back(owned.back().get());
      }
      AugmentOptions o = *opts;
      o.seed = g.seed;
      o.retry = retry;
      const auto res = augment(read_docs(*input), tpls, ptrs, o);
      write_jsonl(res.docs, *output);
      emit_report(g, res.report.to_json());
    });
  }
  {
    auto* cmd = app.add_subcommand("judge-filter", "Keep the top-scored chat samples per task");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto judge = std::make_shared<std::string>();
    auto tpl = std::make_shared<std::string>();
    auto min_score = std::make_shared<int>(8);
    auto top_k = std::make_shared<std::size_t>(100);
    cmd->add_option("-i,--input", *input, "Chat JSONL; judge_score field unless --judge is given")->required();
    cmd->add_option("-o,--output", *output, "Output chat JSONL")->required();
    cmd->add_option("--judge", *judge, "Completion client config used to score samples");
    cmd->add_option("--template", *tpl, "Judge prompt template with {TEXT}");
    cmd->add_option("--min-score", *min_score, "Minimum judge score")->capture_default_str();
    cmd->add_option("--top-k", *top_k, "Samples kept per task")->capture_default_str();
    cmd->callback([=, &g] {
      auto chat = read_chat_jsonl(*input);
      std::vector<JudgedSample> judged;
      std::size_t unscored = 0;
      if (!judge->empty()) {
        if (tpl->empty()) throw Error("--judge needs --template");
        const auto cfg = ClientConfig::from_json(load_json(*judge));
        HttpCompletionClient client(cfg);
        const StyleTemplate prompt(Style::qa, read_text(*tpl));
        for (auto& rec : chat.records) {
          const auto reply =
              complete_with_retries(client, prompt.render(render_conversation(rec.sample)), {cfg.max_retries, cfg.backoff});
          const auto score = parse_judge_score(reply);
          if (!score) {
            ++unscored;
            continue;
          }
          rec.fields["judge_score"] = *score;
          rec.fields["judge_rationale"] = reply;
          judged.push_back(judged_from_record(rec));
        }
      } else {
        for (const auto& rec : chat.records) judged.push_back(judged_from_record(rec));
      }
      const auto kept = judge_filter(judged, *min_score, *top_k);
      std::vector<ChatRecord> out;
      std::map<std::string, std::size_t> per_task;
      for (const auto& s : kept) {
        out.push_back(to_record(s));
        ++per_task[s.task];
      }
      write_chat_jsonl(out, *output);
      emit_report(g, {{"input", chat.records.size()},
                      {"skipped", chat.malformed.size()},
                      {"unscored", unscored},
                      {"kept", out.size()},
                      {"per_task", per_task}});
    });
  }
  {
    auto* cmd = app.add_subcommand("reject-sample", "Keep chat samples whose final answer matches the key");
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto answers = std::make_shared<std::string>();
    cmd->add_option("-i,--input", *input, "Chat JSONL (extracted_answer field, else parsed from the reply)")
        ->required();
    cmd->add_option("-o,--output", *output, "Output chat JSONL")->required();
    cmd->add_option("--answers", *answers, "JSONL of {prompt_id, answer}")->required();
    cmd->callback([=, &g] {
      std::map<std::string, std::string> key;
      const std::string text = read_text(*answers);
      for (auto line : split_lines(text)) {
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        key[j.at("prompt_id").get<std::string>()] = j.at("answer").get<std::string>();
      }
      const auto chat = read_chat_jsonl(*input);
      std::vector<AnswerRecord> samples;
      for (const auto& rec : chat.records) {
        std::string ans;
        if (rec.fields.contains("extracted_answer") && rec.fields["extracted_answer"].is_string()) {
          ans = rec.fields["extracted_answer"].get<std::string>();
        } else if (!rec.sample.messages.empty()) {
          ans = extract_answer(rec.sample.messages.back().content).value_or("");
        }
        samples.push_back({rec, ans});
      }
      const auto res = rejection_sample(samples, key);
      write_chat_jsonl(res.kept, *output);
      emit_report(g, res.report.to_json());
    });
  }
}

std::pair<std::string, double> parse_weighted(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos) throw Error("expected path:weight, got " + spec);
  return {spec.substr(0, colon), std::stod(spec.substr(colon + 1))};
}

void add_merge(CLI::App& app, Globals& g) {
  {
    auto* cmd = app.add_subcommand("merge", "DARE-TIES merge of models onto a shared base");
    auto base = std::make_shared<std::string>();
    auto models = std::make_shared<std::vector<std::string>>();
    auto output = std::make_shared<std::string>();
    auto opts = std::make_shared<MergeOptions>();
    cmd->add_option("--base", *base, "Base parameter directory")->required();
    cmd->add_option("--model", *models, "dir:weight, repeatable")->required();
    cmd->add_option("-o,--output", *output, "Output parameter directory")->required();
    cmd->add_option("--drop", opts->drop_prob, "DARE drop probability")->capture_default_str();
    cmd->add_option("--density", opts->density, "TIES density")->capture_default_str();
    cmd->callback([=, &g] {
      const auto b = load_parameter_map(*base);
      std::vector<ParameterMap> maps;
      std::vector<double> weights;
      for (const auto& spec : *models) {
        auto [path, w] = parse_weighted(spec);
        maps.push_back(load_parameter_map(path));
        weights.push_back(w);
      }
      std::vector<std::pair<const ParameterMap*, double>> in;
      for (std::size_t i = 0; i < maps.size(); ++i) in.emplace_back(&maps[i], weights[i]);
      MergeOptions o = *opts;
      o.seed = g.seed;
      const auto merged = dare_ties(b, in, o);
      save_parameter_map(merged, *output);
      emit_report(g, {{"parameters", merged.num_parameters()},
                      {"arrays", merged.entries.size()},
                      {"drop", o.drop_prob},
                      {"density", o.density},
                      {"seed", o.seed}});
    });
  }
  {
    auto* cmd = app.add_subcommand("grid-search", "Search the merge ratio (0.5+w):(0.5-w) with an external scorer");
    auto base = std::make_shared<std::string>();
    auto a = std::make_shared<std::string>();
    auto b = std::make_shared<std::string>();
    auto scorer = std::make_shared<std::string>();
    auto step = std::make_shared<double>(0.05);
    auto work = std::make_shared<std::string>();
    auto opts = std::make_shared<MergeOptions>();
    cmd->add_option("--base", *base, "Base parameter directory")->required();
    cmd->add_option("--model-a", *a, "First model directory")->required();
    cmd->add_option("--model-b", *b, "Second model directory")->required();
    cmd->add_option("--scorer-cmd", *scorer, "Command run with the merged directory appended; prints a number")
        ->required();
    cmd->add_option("--step", *step, "Grid step for w")->capture_default_str();
    cmd->add_option("--workdir", *work, "Where merged candidates are written");
    cmd->add_option("--drop", opts->drop_prob, "DARE drop probability")->capture_default_str();
    cmd->add_option("--density", opts->density, "TIES density")->capture_default_str();
    cmd->callback([=, &g] {
      const fs::path dir = work->empty() ? fs::temp_directory_path() / "curate-grid" : fs::path(*work);
      fs::create_directories(dir);
      int counter = 0;
      auto run_scorer = [&](const ParameterMap& merged) {
        const auto cand = dir / ("candidate_" + std::to_string(counter++));
        save_parameter_map(merged, cand);
        const std::string cmdline = *scorer + " '" + cand.string() + "'";
        FILE* pipe = popen(cmdline.c_str(), "r");
        if (!pipe) throw Error("cannot run scorer");
        std::string out;
        char buf[256];
        while (fgets(buf, sizeof buf, pipe)) out += buf;
        const int status = pclose(pipe);
        fs::remove_all(cand);
        if (status != 0) throw Error("scorer exited with status " + std::to_string(status));
        try {
          return std::stod(std::string(trim(out)));
        } catch (const std::exception&) {
          throw Error("scorer printed no number: " + std::string(trim(out)));
        }
      };
      MergeOptions o = *opts;
      o.seed = g.seed;
      const auto res = grid_search(load_parameter_map(*base), load_parameter_map(*a), load_parameter_map(*b),
                                   run_scorer, *step, o);
      emit_report(g, res.to_json());
    });
  }
}

void add_eval(CLI::App& app, Globals& g) {
  {
    auto* cmd = app.add_subcommand("eval", "Accuracy, MAD or token F1 over prediction records");
    auto input = std::make_shared<std::string>();
    auto metric = std::make_shared<std::string>("accuracy");
    cmd->add_option("-i,--input", *input, "Prediction JSONL {id, predicted, gold, ...}")->required();
    cmd->add_option("--metric", *metric, "accuracy, mad or f1")
        ->check(CLI::IsMember({"accuracy", "mad", "f1"}))
        ->capture_default_str();
    cmd->callback([=, &g] {
      const auto records = read_predictions(*input);
      const Metric m = parse_metric(*metric);
      const double v = m == Metric::accuracy ? accuracy(records) : m == Metric::mad ? mad(records) : token_f1(records);
      emit_report(g, {{"metric", *metric}, {"records", records.size()}, {"value", v}});
    });
  }
  {
    auto* cmd = app.add_subcommand("calibration", "Expected calibration error");
    auto input = std::make_shared<std::string>();
    auto bins = std::make_shared<std::size_t>(10);
    cmd->add_option("-i,--input", *input, "Prediction JSONL with confidence")->required();
    cmd->add_option("--bins", *bins, "Number of equal-width bins")->capture_default_str();
    cmd->callback([=, &g] { emit_report(g, ece(read_predictions(*input), *bins).to_json()); });
  }
  {
    auto* cmd = app.add_subcommand("aggregate", "Suite aggregate (mad metrics negated) and weighted blend");
    auto scores = std::make_shared<std::string>();
    auto spec = std::make_shared<std::vector<std::string>>();
    auto mt = std::make_shared<std::optional<double>>();
    auto w_mt = std::make_shared<double>(0.3);
    auto baseline = std::make_shared<std::optional<double>>();
    cmd->add_option("--scores", *scores, "JSON list of {name, value, metric}")->required();
    cmd->add_option("--spec", *spec, "Expected benchmarks as name:metric");
    cmd->add_option("--mt-bench", *mt, "General benchmark score for the weighted blend");
    cmd->add_option("--w-mt", *w_mt, "Weight of the general score")->capture_default_str();
    cmd->add_option("--baseline", *baseline, "Baseline aggregate for the change column");
    cmd->callback([=, &g] {
      std::vector<BenchmarkScore> list;
      std::map<std::string, Metric> declared;
      std::vector<std::string> names;
      for (const auto& s : *spec) {
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw Error("spec entries are name:metric");
        declared[s.substr(0, colon)] = parse_metric(s.substr(colon + 1));
        names.push_back(s.substr(0, colon));
      }
      for (const auto& j : load_json(*scores)) {
        BenchmarkScore b;
        b.name = j.at("name").get<std::string>();
        b.value = j.at("value").get<double>();
        b.metric = j.contains("metric") ? parse_metric(j["metric"].get<std::string>()) : Metric::accuracy;
        if (auto it = declared.find(b.name); it != declared.end()) b.metric = it->second;
        list.push_back(b);
      }
      const double agg = aggregate_cyber(list, spec->empty() ? nullptr : &names);
      nlohmann::json report{{"aggregate", agg}, {"aggregate_display", format_fixed(agg)}};
      if (*baseline) {
        const double pct = improvement_pct(**baseline, agg);
        report["change_pct"] = pct;
        report["change_display"] = format_change(pct);
      }
      if (*mt) {
        const double w = aggregate_weighted(**mt, agg, *w_mt, 1.0 - *w_mt);
        report["weighted"] = w;
        report["weighted_display"] = format_fixed(w);
      }
      emit_report(g, report);
    });
  }
}

void add_stats(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("stats", "Sample and whitespace-token counts per source");
  auto input = std::make_shared<std::vector<std::string>>();
  cmd->add_option("-i,--input", *input, "JSONL file(s)")->required();
  cmd->callback([=, &g] {
    CorpusStats s;
    for (const auto& p : *input) {
      JsonlReader r(p);
      while (auto d = r.next()) s.add(*d);
    }
    emit_report(g, s.to_json());
  });
}

void add_pipeline(CLI::App& app, Globals& g, int& exit_code) {
  auto* cmd = app.add_subcommand("pipeline", "Run a configured multi-stage pipeline (--config)");
  cmd->callback([&g, &exit_code] {
    if (g.config.empty()) throw Error("pipeline needs --config");
    auto cfg = PipelineConfig::load(g.config);
    if (!g.report.empty()) cfg.report_path = g.report;
    if (g.threads > 1) cfg.threads = g.threads;
    const auto report = run_pipeline(cfg);
    if (cfg.report_path.empty()) std::cout << report.to_json().dump(2) << "\n";
    if (!report.ok) {
      std::cerr << "stage '" << report.failed_stage << "' failed: " << report.error << "\n";
      exit_code = 1;
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus curation toolkit"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--config", g.config, "Subcommand config file (JSON)");
  app.add_option("--report", g.report, "Write the JSON report here instead of stdout");
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();

  int exit_code = 0;
  add_ingest(app, g);
  add_html2md(app);
  add_expand_categories(app, g);
  add_filter(app, g);
  add_lm(app, g);
  add_dedup(app, g);
  add_classifier(app, g);
  add_curation(app, g);
  add_merge(app, g);
  add_eval(app, g);
  add_stats(app, g);
  add_pipeline(app, g, exit_code);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
