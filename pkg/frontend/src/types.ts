// Payload shapes of the session API (the console's only interface).

export interface AssistPayload {
  prediction: string;
  concept: string;
  span: [number, number]; // Unicode code-point offsets into the statement
  score: number;
}

export interface SessionItem {
  item_id: string;
  text: string;
  assisted: boolean;
  assist: AssistPayload | null;
}

export interface SessionPayload {
  session_id: string;
  participant_id: string;
  group: string;
  class_options: string[];
  items: SessionItem[];
}

export interface ResponseBody {
  item_id: string;
  label: string;
  confidence: number;
  elapsed_ms: number;
}
