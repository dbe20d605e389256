#pragma once

// Canonical instruction texts used by the rollout modes. These are interface
// constants: downstream consumers depend on the exact wording, so edit with
// care. render() substitutes {placeholders} by name.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace selfsearch::prompts {

/// Multi-hop search instruction; the question is appended at the end.
inline constexpr std::string_view kSearchTemplate =
    "Answer the given question. You must conduct reasoning inside <think> and </think> first "
    "every time you get new information. After reasoning, if you find you lack some knowledge, "
    "you can call a search engine by <search> query </search>, and you should return the top "
    "searched results between <information> and </information>. You can search as many times as "
    "you want. For multi-hop QA, you can break it down into pieces and search one by one. If you "
    "find no further external knowledge needed, you can directly provide the answer inside "
    "<answer> and </answer> without detailed illustrations. For example, <answer> Beijing "
    "</answer>. Question: ";

/// Repeated-sampling variant: the engine "will return" results instead of the
/// model producing them, and the multi-hop hint is dropped.
inline constexpr std::string_view kRepeatedSamplingTemplate =
    "Answer the given question. You must conduct reasoning inside <think> and </think> first "
    "every time you get new information. After reasoning, if you find you lack some knowledge, "
    "you can call a search engine by <search> query </search>, and it will return the top "
    "searched results between <information> and </information>. You can search as many times as "
    "you want. If you find no further external knowledge needed, you can directly provide the "
    "answer inside <answer> and </answer> without detailed illustrations. For example, <answer> "
    "Beijing </answer>. Question: ";

/// Instruction for the policy to emit documents for a query, used by
/// self-search document generation. Placeholder: {query}.
inline constexpr std::string_view kProvideInformationTemplate =
    "Given a query, you need to imitate the style of the following demos and generate five "
    "useful documents for the query.\n\n[EXAMPLE]\n\nYou should generate documents that can help "
    "the user find the answer.\nEach document should contain about 30 words.\nYou must directly "
    "output the English documents and not output any other texts.\n\nQuery: {query}\nUseful "
    "Output: ";

/// Direct answering, no reasoning scaffold.
inline constexpr std::string_view kDirectAnswerTemplate =
    "Answer the given question. Provide the answer inside <answer> and </answer> without any "
    "additional information. For example, <answer> Beijing </answer>.";

/// RAG answering over provided documents. Placeholders: {question}, {documents}.
inline constexpr std::string_view kRagTemplate =
    "You are a knowledgeable assistant that utilizes the provided documents to answer the "
    "user's question accurately.\nQuestion: {question}\nDocuments: {documents}\nGuidelines:\n- "
    "Analyze the provided documents to extract relevant information. Synthesize the information "
    "to formulate a coherent and accurate answer.\n- Ensure that your response directly "
    "addresses the user's question using the information from the documents.";

/// Stepwise answering without the tagged search scaffold.
inline constexpr std::string_view kStepwiseAnswerTemplate =
    "Answer the given question. Provide the answer inside <answer> and </answer>. For example, "
    "<answer> Beijing </answer>. Let's search step by step. You can break the question into "
    "pieces and answer one by one.";

/// Reflection trigger appended after a completed response.
inline constexpr std::string_view kReflectionPhrase = "Wait, wait, wait";

/// Substitute every "{name}" occurrence.
inline std::string render(std::string_view tmpl,
                          const std::vector<std::pair<std::string_view, std::string_view>>& subs) {
  std::string out(tmpl);
  for (const auto& [name, value] : subs) {
    const std::string key = "{" + std::string(name) + "}";
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return out;
}

}  // namespace selfsearch::prompts
