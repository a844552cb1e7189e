#include "lotus/signals.hpp"

namespace lotus {

const std::unordered_set<Token>& default_stopwords() {
  // en-v1. Changing this list changes gold keywords; bump kStopwordListVersion.
  static const std::unordered_set<Token> words = {
      "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
      "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
      "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "even",
      "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
      "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
      "itself", "just", "may", "me", "might", "more", "most", "must", "my", "myself", "no", "nor",
      "not", "now", "of", "off", "on", "once", "only", "or", "other", "ought", "our", "ours",
      "ourselves", "out", "over", "own", "same", "shall", "she", "should", "so", "some", "such",
      "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
      "they", "this", "those", "through", "to", "too", "under", "until", "up", "upon", "us", "very",
      "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who", "whom",
      "whose", "why", "will", "with", "within", "without", "would", "yet", "you", "your", "yours",
      "yourself", "yourselves", "s", "t", "'", "\"", ",", ".", "!", "?", ";", ":", "-", "(", ")",
      "[", "]", "`", "&", "/", "says", "said"};
  return words;
}

} // namespace lotus
