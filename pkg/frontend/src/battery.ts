// Question-battery types mirroring the service's shared definition file.
// Wording always arrives from the API; nothing here duplicates option text.

export interface Question {
  key: string;
  role: string;
  text: string;
  options: string[];
  affirmative_index: number;
}

export interface Battery {
  name: string;
  questions: Question[];
}

/** Replace the {group_a}/{group_b} placeholders with the pair's groups. */
export function substituteGroups(text: string, groupA: string, groupB: string): string {
  return text.replaceAll("{group_a}", groupA).replaceAll("{group_b}", groupB);
}
