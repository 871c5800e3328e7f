/**
 * Minimal text/event-stream reader over fetch.
 *
 * EventSource is unavailable in workers and in node, and offers no way
 * to attach an AbortSignal; parsing the stream by hand covers both the
 * panel and the test harness with the same code.
 */

import type { StreamEvent, StreamEventName, StreamEvents } from './types.js';

/** Incremental SSE frame parser; feed() returns completed events. */
export class SseParser {
  private buffer = '';

  feed(chunk: string): StreamEvent[] {
    this.buffer += chunk.replace(/\r\n/g, '\n');
    const events: StreamEvent[] = [];
    let split;
    while ((split = this.buffer.indexOf('\n\n')) >= 0) {
      const frame = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const event = parseFrame(frame);
      if (event) events.push(event);
    }
    return events;
  }
}

function parseFrame(frame: string): StreamEvent | null {
  let name = 'message';
  const dataLines: string[] = [];
  for (const line of frame.split('\n')) {
    if (line.startsWith('event:')) name = line.slice(6).trim();
    else if (line.startsWith('data:')) dataLines.push(line.slice(5).trimStart());
  }
  if (dataLines.length === 0) return null;
  let payload: unknown;
  try {
    payload = JSON.parse(dataLines.join('\n'));
  } catch {
    return null;
  }
  return { name: name as StreamEventName, payload: payload as StreamEvents[StreamEventName] };
}

export type StreamHandler = (event: StreamEvent) => void;

/**
 * Subscribe to an SSE endpoint until the signal aborts.
 * Resolves once the stream closes; rejects on transport failure.
 */
export async function subscribe(
  url: string,
  handler: StreamHandler,
  signal: AbortSignal,
): Promise<void> {
  const response = await fetch(url, {
    headers: { accept: 'text/event-stream' },
    signal,
  });
  if (!response.ok || !response.body) {
    throw new Error(`stream failed: HTTP ${response.status}`);
  }
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
        handler(event);
      }
    }
  } catch (error) {
    if (!signal.aborted) throw error;
  } finally {
    reader.releaseLock();
  }
}
