// Just enough XML for the data-access wire format: flat elements that
// carry attributes only. Works in node and the browser alike, so the
// store layer stays testable without a DOM.

export interface XmlElement {
  tag: string;
  attrs: Record<string, string>;
  children: XmlElement[];
}

const ENTITIES: Record<string, string> = {
  amp: '&',
  lt: '<',
  gt: '>',
  quot: '"',
  apos: "'",
};

export function unescapeXml(text: string): string {
  return text.replace(/&(#x?[0-9a-fA-F]+|[a-z]+);/g, (whole, body: string) => {
    if (body.startsWith('#x') || body.startsWith('#X')) {
      return String.fromCodePoint(parseInt(body.slice(2), 16));
    }
    if (body.startsWith('#')) {
      return String.fromCodePoint(parseInt(body.slice(1), 10));
    }
    return ENTITIES[body] ?? whole;
  });
}

export function escapeAttr(value: string): string {
  return value
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/\n/g, '&#10;')
    .replace(/\r/g, '&#13;')
    .replace(/\t/g, '&#9;');
}

const TAG_RE = /<(\/?)([A-Za-z][\w.-]*)((?:\s+[\w.-]+\s*=\s*(?:"[^"]*"|'[^']*'))*)\s*(\/?)>/g;
const ATTR_RE = /([\w.-]+)\s*=\s*("([^"]*)"|'([^']*)')/g;

/** Parse a document of attribute-only elements; throws on malformed input. */
export function parseXml(text: string): XmlElement {
  const body = text.replace(/<\?xml[^?]*\?>/, '').trim();
  TAG_RE.lastIndex = 0;
  const stack: XmlElement[] = [];
  let root: XmlElement | null = null;
  let match: RegExpExecArray | null;
  let consumed = 0;
  while ((match = TAG_RE.exec(body)) !== null) {
    const between = body.slice(consumed, match.index).trim();
    if (between.length > 0 && stack.length === 0) {
      throw new Error(`unexpected text outside elements: ${between.slice(0, 20)}`);
    }
    consumed = TAG_RE.lastIndex;
    const [, closing, tag, attrText, selfClosing] = match;
    if (closing) {
      const open = stack.pop();
      if (!open || open.tag !== tag) {
        throw new Error(`mismatched closing tag ${tag}`);
      }
      if (stack.length === 0) {
        root = open;
      }
      continue;
    }
    const attrs: Record<string, string> = {};
    ATTR_RE.lastIndex = 0;
    let attr: RegExpExecArray | null;
    while ((attr = ATTR_RE.exec(attrText)) !== null) {
      attrs[attr[1]] = unescapeXml(attr[3] ?? attr[4] ?? '');
    }
    const element: XmlElement = { tag, attrs, children: [] };
    if (stack.length > 0) {
      stack[stack.length - 1].children.push(element);
    }
    if (selfClosing) {
      if (stack.length === 0) {
        root = element;
      }
    } else {
      stack.push(element);
    }
  }
  if (!root || stack.length > 0) {
    throw new Error('no complete root element');
  }
  return root;
}

export function renderElement(
  tag: string,
  attrs: Record<string, string | undefined>,
  children: string[] = [],
): string {
  const parts = Object.keys(attrs)
    .sort()
    .filter((key) => attrs[key] !== undefined)
    .map((key) => ` ${key}="${escapeAttr(attrs[key] as string)}"`)
    .join('');
  if (children.length === 0) {
    return `<${tag}${parts}/>`;
  }
  return `<${tag}${parts}>\n${children.map((c) => '  ' + c).join('\n')}\n</${tag}>`;
}
